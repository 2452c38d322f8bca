#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "osdg/errors.hpp"
#include "osdg/rng.hpp"
#include "osdg/tensor.hpp"

namespace osdg {

// Trainable tensor with an accumulating gradient buffer.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

// Reverse-mode tape node. A fresh graph is built per forward pass; backward()
// resets node-local gradients, seeds the loss with 1 and sweeps in reverse
// topological order, then adds each parameter leaf's gradient into
// Parameter::grad. Running backward twice therefore doubles parameter grads.
class Node;
using Var = std::shared_ptr<Node>;

class Node {
  public:
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    const char* op = "";
    std::vector<Var> parents;
    std::function<void(Node&)> backprop; // adds into parents' grad buffers
    Parameter* param = nullptr;          // set on parameter leaves

    void reset_grad() {
        grad.shape = value.shape;
        grad.data.assign(value.numel(), 0.0);
    }
};

inline Var make_node(Tensor value, std::vector<Var> parents,
                     std::function<void(Node&)> backprop, const char* op) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
    n->op = op;
    for (const Var& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

inline Var var_constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->op = "const";
    return n;
}

inline Var var_param(Parameter& p) {
    auto n = std::make_shared<Node>();
    n->value = p.value;
    n->requires_grad = true;
    n->param = &p;
    n->op = "param";
    return n;
}

// y = x * W + b  (x: [n x p], W: [p x q], b: [q])
inline Var affine(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    const Tensor& bv = b->value;
    if (xv.rank() != 2 || wv.rank() != 2 || xv.shape[1] != wv.shape[0])
        throw ShapeError("affine: x " + xv.shape_str() + " incompatible with W " +
                         wv.shape_str());
    if (bv.numel() != wv.shape[1])
        throw ShapeError("affine: b " + bv.shape_str() + " incompatible with W " +
                         wv.shape_str());
    const std::size_t n = xv.shape[0], p = xv.shape[1], q = wv.shape[1];
    Tensor out({n, q});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) out.at(i, j) = bv.at(j);
    matmul_acc(xv.data.data(), n, p, wv.data.data(), q, out.data.data());
    return make_node(std::move(out), {x, w, b}, [n, p, q](Node& self) {
        Node& x = *self.parents[0];
        Node& w = *self.parents[1];
        Node& b = *self.parents[2];
        if (x.requires_grad)
            matmul_transB_acc(self.grad.data.data(), n, q, w.value.data.data(), p,
                              x.grad.data.data());
        if (w.requires_grad)
            matmul_transA_acc(x.value.data.data(), n, p, self.grad.data.data(), q,
                              w.grad.data.data());
        if (b.requires_grad)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < q; ++j)
                    b.grad.data[j] += self.grad.at(i, j);
    }, "affine");
}

inline Var relu(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return make_node(std::move(out), {x}, [](Node& self) {
        Node& x = *self.parents[0];
        if (!x.requires_grad) return;
        for (std::size_t i = 0; i < x.value.numel(); ++i)
            if (x.value.data[i] > 0.0) x.grad.data[i] += self.grad.data[i];
    }, "relu");
}

inline Var sigmoid(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return make_node(std::move(out), {x}, [](Node& self) {
        Node& x = *self.parents[0];
        if (!x.requires_grad) return;
        for (std::size_t i = 0; i < x.value.numel(); ++i) {
            const double y = self.value.data[i];
            x.grad.data[i] += self.grad.data[i] * y * (1.0 - y);
        }
    }, "sigmoid");
}

// Mean cross-entropy over rows of logits [n x K] against integer labels.
inline Var cross_entropy_mean(const Var& logits, std::vector<int> labels) {
    const Tensor& z = logits->value;
    if (z.rank() != 2 || z.shape[0] != labels.size())
        throw ShapeError("cross_entropy_mean: logits " + z.shape_str() + " vs " +
                         std::to_string(labels.size()) + " labels");
    const std::size_t n = z.shape[0], k = z.shape[1];
    auto probs = std::make_shared<Tensor>(Tensor({n, k}));
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw IndexError("cross_entropy_mean: label " + std::to_string(y) +
                             " out of range [0, " + std::to_string(k) + ")");
        const double* row = z.data.data() + i * k;
        const double lse = logsumexp(row, k);
        for (std::size_t j = 0; j < k; ++j)
            probs->at(i, j) = std::exp(row[j] - lse);
        loss += lse - row[y];
    }
    loss /= static_cast<double>(n);
    return make_node(Tensor::scalar(loss), {logits},
                     [probs, labels = std::move(labels), n, k](Node& self) {
        Node& z = *self.parents[0];
        if (!z.requires_grad) return;
        const double g = self.grad.data[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                double d = probs->at(i, j);
                if (j == static_cast<std::size_t>(labels[i])) d -= 1.0;
                z.grad.at(i, j) += g * d;
            }
    }, "ce_mean");
}

// Mean over rows of the l1 distance between rows of a and b.
inline Var l1_mean(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "l1_mean");
    const std::size_t n = a->value.rank() >= 2 ? a->value.shape[0] : 1;
    double total = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i)
        total += std::abs(a->value.data[i] - b->value.data[i]);
    total /= static_cast<double>(n);
    return make_node(Tensor::scalar(total), {a, b}, [n](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        const double g = self.grad.data[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < a.value.numel(); ++i) {
            const double d = a.value.data[i] - b.value.data[i];
            const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (a.requires_grad) a.grad.data[i] += g * s;
            if (b.requires_grad) b.grad.data[i] -= g * s;
        }
    }, "l1_mean");
}

// Per-row energy score -T * logsumexp(z / T) for logits [n x K] -> [n].
inline Var energy_rows(const Var& logits, double temperature) {
    if (temperature <= 0.0)
        throw ConfigError("energy: temperature must be > 0");
    const Tensor& z = logits->value;
    if (z.rank() != 2) throw ShapeError("energy_rows: logits " + z.shape_str());
    const std::size_t n = z.shape[0], k = z.shape[1];
    Tensor out({n});
    auto probs = std::make_shared<Tensor>(Tensor({n, k}));
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = z.data.data() + i * k;
        double m = row[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double e = std::exp((row[j] - m) / temperature);
            probs->at(i, j) = e;
            s += e;
        }
        for (std::size_t j = 0; j < k; ++j) probs->at(i, j) /= s;
        out.at(i) = -temperature * (m / temperature + std::log(s));
    }
    return make_node(std::move(out), {logits}, [probs, n, k](Node& self) {
        Node& z = *self.parents[0];
        if (!z.requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = self.grad.data[i];
            for (std::size_t j = 0; j < k; ++j)
                z.grad.at(i, j) -= g * probs->at(i, j);
        }
    }, "energy_rows");
}

// mean_i max(0, e_i - margin)^2  -- penalizes energies above the margin.
inline Var hinge_sq_above_mean(const Var& e, double margin) {
    const std::size_t n = e->value.numel();
    if (n == 0) throw ContractError("hinge_sq_above_mean: empty input");
    double total = 0.0;
    for (double v : e->value.data) {
        const double h = std::max(0.0, v - margin);
        total += h * h;
    }
    total /= static_cast<double>(n);
    return make_node(Tensor::scalar(total), {e}, [margin, n](Node& self) {
        Node& e = *self.parents[0];
        if (!e.requires_grad) return;
        const double g = 2.0 * self.grad.data[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            e.grad.data[i] += g * std::max(0.0, e.value.data[i] - margin);
    }, "hinge_above");
}

// mean_i max(0, margin - e_i)^2  -- penalizes energies below the margin.
inline Var hinge_sq_below_mean(const Var& e, double margin) {
    const std::size_t n = e->value.numel();
    if (n == 0) throw ContractError("hinge_sq_below_mean: empty input");
    double total = 0.0;
    for (double v : e->value.data) {
        const double h = std::max(0.0, margin - v);
        total += h * h;
    }
    total /= static_cast<double>(n);
    return make_node(Tensor::scalar(total), {e}, [margin, n](Node& self) {
        Node& e = *self.parents[0];
        if (!e.requires_grad) return;
        const double g = 2.0 * self.grad.data[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            e.grad.data[i] -= g * std::max(0.0, margin - e.value.data[i]);
    }, "hinge_below");
}

inline Var add(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b->value.data[i];
    return make_node(std::move(out), {a, b}, [](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        for (std::size_t i = 0; i < self.value.numel(); ++i) {
            if (a.requires_grad) a.grad.data[i] += self.grad.data[i];
            if (b.requires_grad) b.grad.data[i] += self.grad.data[i];
        }
    }, "add");
}

inline Var scale(const Var& a, double c) {
    Tensor out = a->value;
    for (double& v : out.data) v *= c;
    return make_node(std::move(out), {a}, [c](Node& self) {
        Node& a = *self.parents[0];
        if (!a.requires_grad) return;
        for (std::size_t i = 0; i < self.value.numel(); ++i)
            a.grad.data[i] += c * self.grad.data[i];
    }, "scale");
}

// Column-wise concatenation of [n x p] and [n x q] into [n x (p+q)].
inline Var concat_cols(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.rank() != 2 || bv.rank() != 2 || av.shape[0] != bv.shape[0])
        throw ShapeError("concat_cols: " + av.shape_str() + " vs " + bv.shape_str());
    const std::size_t n = av.shape[0], p = av.shape[1], q = bv.shape[1];
    Tensor out({n, p + q});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) out.at(i, j) = av.at(i, j);
        for (std::size_t j = 0; j < q; ++j) out.at(i, p + j) = bv.at(i, j);
    }
    return make_node(std::move(out), {a, b}, [n, p, q](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        for (std::size_t i = 0; i < n; ++i) {
            if (a.requires_grad)
                for (std::size_t j = 0; j < p; ++j)
                    a.grad.at(i, j) += self.grad.data[i * (p + q) + j];
            if (b.requires_grad)
                for (std::size_t j = 0; j < q; ++j)
                    b.grad.at(i, j) += self.grad.data[i * (p + q) + p + j];
        }
    }, "concat_cols");
}

namespace detail {

inline void topo_order(const Var& root, std::vector<Node*>& order) {
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

} // namespace detail

// Reverse sweep from a scalar loss. Parameter gradients accumulate across
// calls; node-local gradients are reset per call.
inline void backward(const Var& loss) {
    if (loss->value.numel() != 1)
        throw ContractError("backward: loss must be scalar, got shape " +
                            loss->value.shape_str());
    std::vector<Node*> order;
    detail::topo_order(loss, order);
    for (Node* n : order) n->reset_grad();
    loss->grad.data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->requires_grad) n->backprop(*n);
    }
    for (Node* n : order)
        if (n->param)
            for (std::size_t i = 0; i < n->grad.numel(); ++i)
                n->param->grad.data[i] += n->grad.data[i];
}

inline void zero_grads(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->zero_grad();
}

// value <- value - lr * grad for every parameter. Non-finite gradients abort
// with the offending parameter's name.
inline void sgd_step(std::span<Parameter* const> params, double lr) {
    for (Parameter* p : params)
        if (!p->grad.all_finite())
            throw TrainingError("sgd_step: non-finite gradient in parameter '" +
                                p->name + "'");
    for (Parameter* p : params)
        for (std::size_t i = 0; i < p->value.numel(); ++i)
            p->value.data[i] -= lr * p->grad.data[i];
}

// Central-difference gradient check. loss_fn must rebuild the loss graph from
// the parameters' current values and be deterministic across calls. Returns
// the max over sampled coordinates of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
// max_coords_per_param == 0 checks every coordinate.
inline double grad_check(const std::function<Var()>& loss_fn,
                         std::span<Parameter* const> params, double eps = 1e-5,
                         std::size_t max_coords_per_param = 0,
                         std::uint64_t seed = 0x9) {
    const auto eval = [&]() {
        Var loss = loss_fn();
        if (loss->value.numel() != 1)
            throw ContractError("grad_check: loss_fn must produce a scalar");
        const double v = loss->value.data[0];
        if (!std::isfinite(v))
            throw NumericError("grad_check: loss is non-finite (" +
                               std::to_string(v) + ")");
        return v;
    };

    for (Parameter* p : params) p->zero_grad();
    Var loss = loss_fn();
    if (!std::isfinite(loss->value.data[0]))
        throw NumericError("grad_check: loss is non-finite at the base point");
    backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    RngStream rng(seed);
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        const std::size_t n = p->value.numel();
        std::vector<std::size_t> coords;
        if (max_coords_per_param == 0 || n <= max_coords_per_param) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            for (std::size_t i = 0; i < max_coords_per_param; ++i)
                coords.push_back(rng.uniform_index(n));
        }
        for (std::size_t c : coords) {
            const double saved = p->value.data[c];
            p->value.data[c] = saved + eps;
            const double fp = eval();
            p->value.data[c] = saved - eps;
            const double fm = eval();
            p->value.data[c] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[pi].data[c];
            const double rel = std::abs(a - numeric) /
                               std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

} // namespace osdg
