#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "osdg/errors.hpp"

namespace osdg {

// Dense row-major n-dimensional array of doubles. Plain value type: copies
// are deep, moves are cheap, and no op here mutates an input.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), data(count(shape), fill) {}
    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (count(shape) != data.size())
            throw ShapeError("tensor: shape " + shape_str() + " needs " +
                             std::to_string(count(shape)) + " values, got " +
                             std::to_string(data.size()));
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) n *= e;
        return s.empty() ? 0 : n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }
    double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Tensor reshaped(std::vector<std::size_t> s) const {
        if (count(s) != numel())
            throw ShapeError("reshape: cannot view " + shape_str() + " as " +
                             shape_str_of(s));
        Tensor out;
        out.shape = std::move(s);
        out.data = data;
        return out;
    }

    std::string shape_str() const { return shape_str_of(shape); }

    static std::string shape_str_of(const std::vector<std::size_t>& s) {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << "]";
        return os.str();
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(where) + ": shape " + a.shape_str() +
                         " != " + b.shape_str());
}

// C[m x n] += A[m x k] * B[k x n]. i-k-j order so the inner loop walks both
// B and C rows contiguously.
inline void matmul_acc(const double* a, std::size_t m, std::size_t k,
                       const double* b, std::size_t n, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x n] += A^T[m x k] * B[k x n] with A stored [k x m].
inline void matmul_transA_acc(const double* a, std::size_t k, std::size_t m,
                              const double* b, std::size_t n, double* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x n] += A[m x k] * B^T[k x n] with B stored [n x k].
inline void matmul_transB_acc(const double* a, std::size_t m, std::size_t k,
                              const double* b, std::size_t n, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
        throw ShapeError("matmul: " + a.shape_str() + " x " + b.shape_str());
    Tensor c({a.shape[0], b.shape[1]});
    matmul_acc(a.data.data(), a.shape[0], a.shape[1], b.data.data(), b.shape[1],
               c.data.data());
    return c;
}

inline double logsumexp(const double* z, std::size_t n) {
    double m = z[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, z[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(z[i] - m);
    return m + std::log(s);
}

inline Tensor softmax(const Tensor& logits) {
    if (logits.numel() == 0) throw ShapeError("softmax: empty input");
    Tensor out = logits;
    const double m = *std::max_element(logits.data.begin(), logits.data.end());
    double s = 0.0;
    for (double& v : out.data) {
        v = std::exp(v - m);
        s += v;
    }
    for (double& v : out.data) v /= s;
    return out;
}

// Stable -log softmax(logits)[label].
inline double softmax_cross_entropy(const Tensor& logits, int label) {
    const std::size_t k = logits.numel();
    if (label < 0 || static_cast<std::size_t>(label) >= k)
        throw IndexError("softmax_cross_entropy: label " + std::to_string(label) +
                         " out of range [0, " + std::to_string(k) + ")");
    return logsumexp(logits.data.data(), k) - logits.data[static_cast<std::size_t>(label)];
}

} // namespace osdg
