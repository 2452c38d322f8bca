#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "osdg/errors.hpp"
#include "osdg/io.hpp"
#include "osdg/objective.hpp"
#include "osdg/tensor.hpp"

namespace osdg {

// All scores share one orientation: higher = more OOD.
enum class DetectorKind { Energy, Msp, GaussianDensity, Ocsvm };

inline const char* detector_name(DetectorKind kind) {
    switch (kind) {
        case DetectorKind::Energy: return "energy";
        case DetectorKind::Msp: return "msp";
        case DetectorKind::GaussianDensity: return "ddu";
        case DetectorKind::Ocsvm: return "ocsvm";
    }
    throw ContractError("detector_name: unknown kind");
}

inline DetectorKind parse_detector(const std::string& name) {
    if (name == "energy") return DetectorKind::Energy;
    if (name == "msp") return DetectorKind::Msp;
    if (name == "ddu") return DetectorKind::GaussianDensity;
    if (name == "ocsvm") return DetectorKind::Ocsvm;
    throw ConfigError("unknown detector '" + name +
                      "' (expected energy, msp, ddu, or ocsvm)");
}

// Energy of one logit row; ID samples trained below gamma score low, OOD
// samples score high, so the raw energy is already an OOD score.
inline double energy_score(const std::vector<double>& logits,
                           double temperature = 1.0) {
    if (temperature <= 0.0)
        throw ConfigError("energy_score: temperature must be > 0");
    if (logits.empty()) throw ShapeError("energy_score: empty logits");
    std::vector<double> scaled(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j)
        scaled[j] = logits[j] / temperature;
    return -temperature * logsumexp(scaled.data(), scaled.size());
}

// 1 - max softmax probability; confident predictions score near 0.
inline double msp_score(const std::vector<double>& logits) {
    if (logits.empty()) throw ShapeError("msp_score: empty logits");
    const double lse = logsumexp(logits.data(), logits.size());
    double best = logits[0];
    for (double z : logits) best = std::max(best, z);
    return 1.0 - std::exp(best - lse);
}

// Class-conditional Gaussian mixture over feature space: per-class means, a
// shared (pooled within-class) covariance with diagonal ridge, and frequency
// priors. Scoring uses the Cholesky factor of the ridged covariance.
struct GaussianClassDensity {
    Tensor means;                  // [K x r]
    Tensor chol;                   // [r x r] lower-triangular L, Sigma = L L^T
    std::vector<double> log_priors;
    double log_det_half = 0.0;     // sum_i log L_ii
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
};

inline GaussianClassDensity fit_gaussian_density(const Tensor& features,
                                                 const std::vector<int>& labels,
                                                 std::size_t num_classes,
                                                 double ridge = 1e-3) {
    if (features.rank() != 2)
        throw ShapeError("fit_gaussian_density: features " + features.shape_str());
    if (features.shape[0] != labels.size())
        throw ShapeError("fit_gaussian_density: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(features.shape[0]) +
                         " feature rows");
    if (num_classes == 0)
        throw ConfigError("fit_gaussian_density: num_classes must be positive");
    if (ridge < 0.0)
        throw ConfigError("fit_gaussian_density: ridge must be >= 0");
    const std::size_t n = features.shape[0], r = features.shape[1];

    std::vector<std::size_t> counts(num_classes, 0);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw IndexError("fit_gaussian_density: label " + std::to_string(y) +
                             " out of range [0, " + std::to_string(num_classes) + ")");
        ++counts[static_cast<std::size_t>(y)];
    }
    for (std::size_t k = 0; k < num_classes; ++k)
        if (counts[k] < 2)
            throw ContractError("fit_gaussian_density: class " + std::to_string(k) +
                                " has " + std::to_string(counts[k]) +
                                " samples; need at least 2 per class");

    GaussianClassDensity model;
    model.feature_dim = r;
    model.num_classes = num_classes;
    model.means = Tensor::zeros({num_classes, r});
    for (std::size_t i = 0; i < n; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        for (std::size_t j = 0; j < r; ++j)
            model.means.at(y, j) += features.at(i, j);
    }
    for (std::size_t k = 0; k < num_classes; ++k)
        for (std::size_t j = 0; j < r; ++j)
            model.means.at(k, j) /= static_cast<double>(counts[k]);

    // Pooled within-class scatter with the unbiased n - K denominator.
    Tensor sigma = Tensor::zeros({r, r});
    for (std::size_t i = 0; i < n; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        for (std::size_t a = 0; a < r; ++a) {
            const double da = features.at(i, a) - model.means.at(y, a);
            if (da == 0.0) continue;
            for (std::size_t b = 0; b < r; ++b)
                sigma.at(a, b) += da * (features.at(i, b) - model.means.at(y, b));
        }
    }
    const double denom = static_cast<double>(n - num_classes);
    for (double& v : sigma.data) v /= denom;
    for (std::size_t a = 0; a < r; ++a) sigma.at(a, a) += ridge;

    // In-place lower Cholesky; a non-positive pivot means the ridged
    // covariance is still effectively singular.
    model.chol = Tensor::zeros({r, r});
    for (std::size_t a = 0; a < r; ++a) {
        for (std::size_t b = 0; b <= a; ++b) {
            double s = sigma.at(a, b);
            for (std::size_t c = 0; c < b; ++c)
                s -= model.chol.at(a, c) * model.chol.at(b, c);
            if (a == b) {
                if (s <= 0.0)
                    throw NumericError(
                        "fit_gaussian_density: covariance is not positive definite "
                        "at pivot " + std::to_string(a) +
                        "; increase the ridge (currently " + std::to_string(ridge) +
                        ")");
                model.chol.at(a, a) = std::sqrt(s);
            } else {
                model.chol.at(a, b) = s / model.chol.at(b, b);
            }
        }
    }
    for (std::size_t a = 0; a < r; ++a)
        model.log_det_half += std::log(model.chol.at(a, a));

    model.log_priors.resize(num_classes);
    for (std::size_t k = 0; k < num_classes; ++k)
        model.log_priors[k] =
            std::log(static_cast<double>(counts[k]) / static_cast<double>(n));
    return model;
}

// -log sum_k pi_k N(x; mu_k, Sigma), evaluated through the Cholesky factor.
inline double gaussian_density_score(const GaussianClassDensity& model,
                                     const std::vector<double>& feature) {
    const std::size_t r = model.feature_dim;
    if (feature.size() != r)
        throw ShapeError("gaussian_density_score: feature has " +
                         std::to_string(feature.size()) + " dims, model expects " +
                         std::to_string(r));
    static const double kLog2Pi = std::log(2.0 * 3.14159265358979323846);
    std::vector<double> log_terms(model.num_classes);
    std::vector<double> y(r);
    for (std::size_t k = 0; k < model.num_classes; ++k) {
        // Solve L y = (x - mu_k) by forward substitution; the quadratic form
        // is then |y|^2.
        double quad = 0.0;
        for (std::size_t a = 0; a < r; ++a) {
            double s = feature[a] - model.means.at(k, a);
            for (std::size_t b = 0; b < a; ++b) s -= model.chol.at(a, b) * y[b];
            y[a] = s / model.chol.at(a, a);
            quad += y[a] * y[a];
        }
        log_terms[k] = model.log_priors[k] - 0.5 * static_cast<double>(r) * kLog2Pi -
                       model.log_det_half - 0.5 * quad;
    }
    return -logsumexp(log_terms.data(), log_terms.size());
}

// Uniform front-end over the scorers. Energy and msp are stateless and
// refuse fitting; the Gaussian-density detector must be fitted before use.
class Detector {
  public:
    explicit Detector(DetectorKind kind, double temperature = 1.0)
        : kind_(kind), temperature_(temperature) {
        if (kind == DetectorKind::Ocsvm)
            throw ConfigError("detector 'ocsvm' is reserved but has no solver; "
                              "choose energy, msp, or ddu");
        if (temperature <= 0.0)
            throw ConfigError("detector: temperature must be > 0");
    }

    DetectorKind kind() const { return kind_; }
    bool needs_fit() const { return kind_ == DetectorKind::GaussianDensity; }
    bool fitted() const { return fitted_; }

    void fit(const Tensor& features, const std::vector<int>& labels,
             std::size_t num_classes, double ridge = 1e-3) {
        if (!needs_fit())
            throw ContractError(std::string("detector '") + detector_name(kind_) +
                                "' is stateless and cannot be fitted");
        density_ = fit_gaussian_density(features, labels, num_classes, ridge);
        fitted_ = true;
    }

    const GaussianClassDensity& density() const {
        if (kind_ != DetectorKind::GaussianDensity || !fitted_)
            throw ContractError(std::string("detector '") + detector_name(kind_) +
                                "' holds no fitted density");
        return density_;
    }

    double score(const std::vector<double>& feature,
                 const std::vector<double>& logits) const {
        switch (kind_) {
            case DetectorKind::Energy: return energy_score(logits, temperature_);
            case DetectorKind::Msp: return msp_score(logits);
            case DetectorKind::GaussianDensity:
                if (!fitted_)
                    throw ContractError("detector 'ddu' must be fitted before "
                                        "scoring");
                return gaussian_density_score(density_, feature);
            case DetectorKind::Ocsvm: break;
        }
        throw ContractError("detector: unsupported kind");
    }

  private:
    DetectorKind kind_;
    double temperature_;
    bool fitted_ = false;
    GaussianClassDensity density_;
};

// Feature/logit dump for detector evaluation decoupled from training:
//   [n u32 LE][r u32 LE][K u32 LE]
//   per sample: [label i32 LE][feature f64 LE x r][logits f64 LE x K]
struct FeatureDump {
    Tensor features; // [n x r]
    Tensor logits;   // [n x K]
    std::vector<int> labels;
};

inline void write_feature_dump(const std::string& path, const FeatureDump& dump) {
    if (dump.features.rank() != 2 || dump.logits.rank() != 2 ||
        dump.features.shape[0] != dump.logits.shape[0] ||
        dump.features.shape[0] != dump.labels.size())
        throw ShapeError("write_feature_dump: inconsistent features " +
                         dump.features.shape_str() + " / logits " +
                         dump.logits.shape_str() + " / " +
                         std::to_string(dump.labels.size()) + " labels");
    const std::size_t n = dump.features.shape[0];
    const std::size_t r = dump.features.shape[1];
    const std::size_t k = dump.logits.shape[1];
    auto os = open_output(path);
    write_u32_le(os, static_cast<std::uint32_t>(n));
    write_u32_le(os, static_cast<std::uint32_t>(r));
    write_u32_le(os, static_cast<std::uint32_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        write_i32_le(os, dump.labels[i]);
        for (std::size_t j = 0; j < r; ++j) write_f64_le(os, dump.features.at(i, j));
        for (std::size_t j = 0; j < k; ++j) write_f64_le(os, dump.logits.at(i, j));
    }
    if (!os) throw FormatError("write_feature_dump: write to '" + path + "' failed");
}

inline FeatureDump read_feature_dump(const std::string& path) {
    auto is = open_input(path);
    const std::uint32_t n = read_u32_le(is, "feature dump count");
    const std::uint32_t r = read_u32_le(is, "feature dump feature dim");
    const std::uint32_t k = read_u32_le(is, "feature dump logit dim");
    FeatureDump dump;
    dump.features = Tensor({n, r});
    dump.logits = Tensor({n, k});
    dump.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        dump.labels[i] = read_i32_le(is, "feature dump label");
        for (std::uint32_t j = 0; j < r; ++j)
            dump.features.at(i, j) = read_f64_le(is, "feature dump feature");
        for (std::uint32_t j = 0; j < k; ++j)
            dump.logits.at(i, j) = read_f64_le(is, "feature dump logit");
    }
    return dump;
}

} // namespace osdg
