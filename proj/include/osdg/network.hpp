#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "osdg/autograd.hpp"
#include "osdg/errors.hpp"
#include "osdg/rng.hpp"
#include "osdg/tensor.hpp"

namespace osdg {

struct NetworkSpec {
    std::size_t input_dim = 3 * 28 * 28;
    std::vector<std::size_t> hidden_sizes; // extra layers inside the extractor
    std::size_t feature_dim = 64;          // r
    std::size_t num_classes = 7;           // K
};

// Classifier f = h(g(x)): g is an affine+ReLU chain ending at feature_dim,
// h a single affine layer producing num_classes logits. Weights are drawn
// uniform in +-sqrt(6 / (fan_in + fan_out)), biases start at zero.
class Network {
  public:
    Network(NetworkSpec spec, RngStream& init_rng) : spec_(std::move(spec)) {
        std::vector<std::size_t> dims;
        dims.push_back(spec_.input_dim);
        for (std::size_t h : spec_.hidden_sizes) dims.push_back(h);
        dims.push_back(spec_.feature_dim);
        num_feature_layers_ = dims.size() - 1;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            const std::string base = "g." + std::to_string(l);
            params_.emplace_back(base + ".W",
                                 glorot({dims[l], dims[l + 1]}, init_rng));
            params_.emplace_back(base + ".b", Tensor::zeros({dims[l + 1]}));
        }
        params_.emplace_back("h.W",
                             glorot({spec_.feature_dim, spec_.num_classes}, init_rng));
        params_.emplace_back("h.b", Tensor::zeros({spec_.num_classes}));
    }

    const NetworkSpec& spec() const { return spec_; }

    // g(x): [n x input_dim] -> [n x feature_dim], ReLU after every layer.
    Var features(const Var& x) {
        Var h = x;
        for (std::size_t l = 0; l < num_feature_layers_; ++l)
            h = relu(affine(h, var_param(params_[2 * l]), var_param(params_[2 * l + 1])));
        return h;
    }

    // h(features): [n x feature_dim] -> [n x num_classes].
    Var logits(const Var& feats) {
        const std::size_t base = 2 * num_feature_layers_;
        return affine(feats, var_param(params_[base]), var_param(params_[base + 1]));
    }

    Var forward(const Var& x) { return logits(features(x)); }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        out.reserve(params_.size());
        for (Parameter& p : params_) out.push_back(&p);
        return out;
    }

    std::vector<std::pair<std::string, Tensor>> state() const {
        std::vector<std::pair<std::string, Tensor>> out;
        out.reserve(params_.size());
        for (const Parameter& p : params_) out.emplace_back(p.name, p.value);
        return out;
    }

    void load_state(const std::vector<std::pair<std::string, Tensor>>& tensors) {
        if (tensors.size() != params_.size())
            throw FormatError("network state: expected " +
                              std::to_string(params_.size()) + " tensors, got " +
                              std::to_string(tensors.size()));
        for (Parameter& p : params_) {
            bool found = false;
            for (const auto& [name, value] : tensors) {
                if (name != p.name) continue;
                if (!value.same_shape(p.value))
                    throw FormatError("network state: tensor '" + name + "' shape " +
                                      value.shape_str() + " != expected " +
                                      p.value.shape_str());
                p.value = value;
                found = true;
                break;
            }
            if (!found)
                throw FormatError("network state: missing tensor '" + p.name + "'");
        }
    }

  private:
    static Tensor glorot(std::vector<std::size_t> shape, RngStream& rng) {
        const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
        Tensor t(std::move(shape));
        for (double& v : t.data) v = rng.uniform(-bound, bound);
        return t;
    }

    NetworkSpec spec_;
    std::vector<Parameter> params_;
    std::size_t num_feature_layers_ = 0;
};

} // namespace osdg
