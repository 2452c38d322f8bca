#pragma once

#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "osdg/autograd.hpp"
#include "osdg/errors.hpp"
#include "osdg/network.hpp"
#include "osdg/tensor.hpp"

namespace osdg {

// Regularizer weights. gamma is a margin on the (negative) energy axis and
// must sit strictly below zero; temperatures must be positive. Validated at
// construction so invalid combinations never reach the training loop.
class LossWeights {
  public:
    LossWeights(double zeta1, double zeta2, double gamma, double temperature = 1.0)
        : zeta1_(zeta1), zeta2_(zeta2), gamma_(gamma), temperature_(temperature) {
        if (zeta1 < 0.0 || zeta2 < 0.0)
            throw ConfigError("loss weights: zeta1 and zeta2 must be >= 0");
        if (gamma >= 0.0)
            throw ConfigError("loss weights: gamma must be < 0, got " +
                              std::to_string(gamma));
        if (temperature <= 0.0)
            throw ConfigError("loss weights: temperature must be > 0");
    }

    static LossWeights erm() { return LossWeights(0.0, 0.0, -1.0, 1.0); }

    double zeta1() const { return zeta1_; }
    double zeta2() const { return zeta2_; }
    double gamma() const { return gamma_; }
    double temperature() const { return temperature_; }

  private:
    double zeta1_, zeta2_, gamma_, temperature_;
};

struct LossBreakdown {
    double cross_entropy = 0.0;
    double r_feature = 0.0;
    double r_energy = 0.0;
    double total = 0.0;
};

struct LossGraph {
    Var total;
    LossBreakdown parts;
};

// Mean over rows of the l1 distance between two feature matrices.
inline double l1_distance(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "l1_distance");
    const std::size_t n = a.rank() >= 2 ? a.shape[0] : 1;
    double total = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        total += std::abs(a.data[i] - b.data[i]);
    return total / static_cast<double>(n);
}

// Per-row energy -T * logsumexp(z / T) without building a graph.
inline std::vector<double> energy_values(const Tensor& logits, double temperature) {
    if (temperature <= 0.0)
        throw ConfigError("energy: temperature must be > 0");
    if (logits.rank() != 2)
        throw ShapeError("energy_values: logits " + logits.shape_str());
    const std::size_t n = logits.shape[0], k = logits.shape[1];
    std::vector<double> out(n);
    std::vector<double> scaled(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j)
            scaled[j] = logits.at(i, j) / temperature;
        out[i] = -temperature * logsumexp(scaled.data(), k);
    }
    return out;
}

// Squared-hinge energy bounding without a graph: id energies are pushed
// below gamma, ood energies above it.
inline double r_energy_value(const std::vector<double>& id_energies,
                             const std::vector<double>& ood_energies, double gamma) {
    if (id_energies.empty())
        throw ContractError("r_energy: no in-distribution energies");
    double id_term = 0.0;
    for (double e : id_energies) {
        const double h = std::max(0.0, e - gamma);
        id_term += h * h;
    }
    id_term /= static_cast<double>(id_energies.size());
    if (ood_energies.empty()) {
        std::cerr << "warning: r_energy evaluated without outlier energies; "
                     "only the in-distribution bound is active\n";
        return id_term;
    }
    double ood_term = 0.0;
    for (double e : ood_energies) {
        const double h = std::max(0.0, gamma - e);
        ood_term += h * h;
    }
    ood_term /= static_cast<double>(ood_energies.size());
    return id_term + ood_term;
}

// Feature-space invariance term as a graph node: the mean l1 distance
// between g(x) and g(G(x, v')). Both branches stay differentiable; there is
// deliberately no stop-gradient on either side.
inline Var r_feature_graph(Network& net, const Var& x, const Var& x_transfer) {
    require_same_shape(x->value, x_transfer->value, "r_feature");
    return l1_mean(net.features(x), net.features(x_transfer));
}

// Full objective: cross-entropy + zeta1 * R_F + zeta2 * R_E. Zero-weighted
// terms are skipped entirely, so an ERM run never touches the transfer or
// synthetic branches and reduces to plain cross-entropy bit for bit.
//
// x/labels form the labeled batch; x_transfer carries the domain-transferred
// counterparts (row i matches row i of x); x_synth holds synthesized
// outliers. Labels must index real training classes.
inline LossGraph total_loss(Network& net, const Tensor& x,
                            const std::vector<int>& labels, const Tensor& x_transfer,
                            const Tensor& x_synth, const LossWeights& w) {
    const std::size_t num_classes = net.spec().num_classes;
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw ContractError("total_loss: label " + std::to_string(y) +
                                " outside the training label set [0, " +
                                std::to_string(num_classes) + ")");

    const Var xv = var_constant(x);
    const Var feats = net.features(xv);
    const Var logits = net.logits(feats);

    LossGraph out;
    Var loss = cross_entropy_mean(logits, labels);
    out.parts.cross_entropy = loss->value.data[0];

    if (w.zeta1() > 0.0) {
        const Var xt = var_constant(x_transfer);
        require_same_shape(x, x_transfer, "total_loss: transfer batch");
        const Var rf = l1_mean(feats, net.features(xt));
        out.parts.r_feature = rf->value.data[0];
        loss = add(loss, scale(rf, w.zeta1()));
    }

    if (w.zeta2() > 0.0) {
        const Var id_energy = energy_rows(logits, w.temperature());
        Var re = hinge_sq_above_mean(id_energy, w.gamma());
        if (x_synth.numel() == 0) {
            std::cerr << "warning: total_loss has zeta2 > 0 but no synthetic "
                         "outliers; only the in-distribution bound is active\n";
        } else {
            if (x_synth.rank() != 2 || x_synth.shape[1] != x.shape[1])
                throw ShapeError("total_loss: synthetic batch " +
                                 x_synth.shape_str() + " vs inputs " + x.shape_str());
            const Var ood_logits = net.forward(var_constant(x_synth));
            const Var ood_energy = energy_rows(ood_logits, w.temperature());
            re = add(re, hinge_sq_below_mean(ood_energy, w.gamma()));
        }
        out.parts.r_energy = re->value.data[0];
        loss = add(loss, scale(re, w.zeta2()));
    }

    out.parts.total = loss->value.data[0];
    out.total = loss;
    return out;
}

} // namespace osdg
