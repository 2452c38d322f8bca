#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "osdg/autograd.hpp"
#include "osdg/checkpoint.hpp"
#include "osdg/datasets.hpp"
#include "osdg/errors.hpp"
#include "osdg/rng.hpp"
#include "osdg/tensor.hpp"

namespace osdg {

enum class GeneratorMode { Oracle, Learned };

// Coefficient law for semantic blending. Magnitudes are drawn log-uniformly
// so small perturbations and aggressive extrapolations are equally likely,
// signs are fair coins, and the result is clipped to the admissible range.
struct BlendSpec {
    double magnitude_min = 0.25;
    double magnitude_max = 4.0;
    double coeff_min = -100.0;
    double coeff_max = 100.0;

    void validate() const {
        if (magnitude_min <= 0.0 || magnitude_max < magnitude_min)
            throw ConfigError("blend: need 0 < magnitude_min <= magnitude_max");
        if (coeff_min >= coeff_max)
            throw ConfigError("blend: coeff_min must be < coeff_max");
    }
};

struct BlendCoeffs {
    double alpha = 0.0;
    double beta = 0.0;
};

inline BlendCoeffs sample_blend(RngStream& rng, const BlendSpec& spec = {}) {
    spec.validate();
    const auto draw = [&]() {
        const double mag = std::exp(rng.uniform(std::log(spec.magnitude_min),
                                                std::log(spec.magnitude_max)));
        const double signed_mag = rng.coin() ? mag : -mag;
        return std::clamp(signed_mag, spec.coeff_min, spec.coeff_max);
    };
    return {draw(), draw()};
}

// s~ = alpha * s1 + beta * s2.
inline Tensor blend_semantics(const Tensor& s1, const Tensor& s2, double alpha,
                              double beta) {
    if (!s1.same_shape(s2))
        throw ShapeError("blend_semantics: " + s1.shape_str() + " vs " +
                         s2.shape_str());
    Tensor out = s1;
    for (std::size_t i = 0; i < out.numel(); ++i)
        out.data[i] = alpha * s1.data[i] + beta * s2.data[i];
    return out;
}

// Factorizes an image into a semantic code s and a variation code v such that
// decode(s, v) reconstructs the image. domain_transfer and synth_ood are
// assembled from the primitive codecs and are shared across implementations.
class Generator {
  public:
    virtual ~Generator() = default;

    virtual GeneratorMode mode() const = 0;
    virtual Tensor encode_semantic(const Tensor& image) const = 0;
    virtual Tensor encode_variation(const Tensor& image) const = 0;
    virtual Tensor decode(const Tensor& semantic, const Tensor& variation) const = 0;
    virtual Tensor sample_variation(RngStream& rng) const = 0;

    // G(x, v'): same semantics, freshly sampled variation.
    Tensor domain_transfer(const Tensor& image, RngStream& rng) const {
        return decode(encode_semantic(image), sample_variation(rng));
    }

    // Synthetic outlier from two differently-labeled samples (blended
    // semantics under a fresh variation).
    Tensor synth_ood(const Tensor& image_a, int label_a, const Tensor& image_b,
                     int label_b, RngStream& rng, const BlendSpec& spec = {}) const {
        if (label_a == label_b)
            throw ContractError("synth_ood: both samples have label " +
                                std::to_string(label_a) +
                                "; blending needs distinct classes");
        const BlendCoeffs c = sample_blend(rng, spec);
        const Tensor s = blend_semantics(encode_semantic(image_a),
                                         encode_semantic(image_b), c.alpha, c.beta);
        return decode(s, sample_variation(rng));
    }
};

// Exact codec for palette-colored glyphs. Colorization is multiplicative, so
// the per-pixel channel maximum equals gray * max(palette); dividing by the
// matched palette's maximum recovers the glyph exactly. Sampled variations
// are max-normalized, which makes transferred images self-describing: their
// channel maximum is the glyph itself.
class OracleGenerator final : public Generator {
  public:
    explicit OracleGenerator(std::vector<std::array<double, 3>> known_palettes)
        : known_(std::move(known_palettes)) {
        for (const auto& p : known_)
            if (std::max({p[0], p[1], p[2]}) <= 0.0)
                throw ConfigError("oracle generator: known palette must have a "
                                  "positive component");
    }

    GeneratorMode mode() const override { return GeneratorMode::Oracle; }

    Tensor encode_semantic(const Tensor& image) const override {
        check_image(image, "encode_semantic");
        Tensor gray({28, 28});
        for (std::size_t p = 0; p < 784; ++p)
            gray.data[p] = std::max({image.data[p], image.data[784 + p],
                                     image.data[2 * 784 + p]});
        const double divisor = matched_palette_max(image);
        if (divisor != 1.0)
            for (double& v : gray.data) v /= divisor;
        return gray;
    }

    Tensor encode_variation(const Tensor& image) const override {
        check_image(image, "encode_variation");
        std::array<double, 3> mean{0.0, 0.0, 0.0};
        std::size_t foreground = 0;
        for (std::size_t p = 0; p < 784; ++p) {
            const double mx = std::max({image.data[p], image.data[784 + p],
                                        image.data[2 * 784 + p]});
            if (mx <= 0.0) continue;
            ++foreground;
            for (std::size_t c = 0; c < 3; ++c) mean[c] += image.data[c * 784 + p];
        }
        if (foreground == 0)
            throw ContractError("encode_variation: all-black image has no "
                                "recoverable palette");
        const double top = std::max({mean[0], mean[1], mean[2]});
        std::array<double, 3> direction{};
        for (std::size_t c = 0; c < 3; ++c) direction[c] = mean[c] / top;
        // A matched palette is returned at its original scale so that
        // decode(encode_semantic(x), encode_variation(x)) reproduces x even
        // when the palette's peak component is below 1.
        if (const std::array<double, 3>* known = match_known(direction)) {
            Tensor v({3});
            for (std::size_t c = 0; c < 3; ++c) v.data[c] = (*known)[c];
            return v;
        }
        Tensor v({3});
        for (std::size_t c = 0; c < 3; ++c) v.data[c] = direction[c];
        return v;
    }

    Tensor decode(const Tensor& semantic, const Tensor& variation) const override {
        if (semantic.numel() != 784)
            throw ShapeError("decode: semantic code " + semantic.shape_str() +
                             ", expected 784 values");
        if (variation.numel() != 3)
            throw ShapeError("decode: variation code " + variation.shape_str() +
                             ", expected 3 values");
        Tensor out({3, 28, 28});
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < 784; ++p)
                out.data[c * 784 + p] =
                    std::clamp(semantic.data[p] * variation.data[c], 0.0, 1.0);
        return out;
    }

    Tensor sample_variation(RngStream& rng) const override {
        Tensor v({3});
        double top = 0.0;
        while (top == 0.0) {
            for (double& c : v.data) c = std::abs(rng.normal());
            top = std::max({v.data[0], v.data[1], v.data[2]});
        }
        for (double& c : v.data) c /= top;
        return v;
    }

  private:
    static void check_image(const Tensor& image, const char* where) {
        if (image.shape != std::vector<std::size_t>{3, 28, 28})
            throw ShapeError(std::string(where) + ": expected [3x28x28], got " +
                             image.shape_str());
    }

    // Matches a max-normalized palette direction against the known palettes
    // (tolerance 1e-6). Freshly sampled variations are max-normalized and
    // thus (with probability 1) match nothing.
    const std::array<double, 3>* match_known(const std::array<double, 3>& dir) const {
        for (const auto& q : known_) {
            const double qtop = std::max({q[0], q[1], q[2]});
            bool match = true;
            for (std::size_t c = 0; c < 3; ++c)
                if (std::abs(dir[c] - q[c] / qtop) > 1e-6) {
                    match = false;
                    break;
                }
            if (match) return &q;
        }
        return nullptr;
    }

    // The divisor that turns a per-pixel channel maximum back into the glyph:
    // the matched palette's peak component, or 1 for unmatched (sampled,
    // max-normalized) palettes.
    double matched_palette_max(const Tensor& image) const {
        std::array<double, 3> chan_max{0.0, 0.0, 0.0};
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < 784; ++p)
                chan_max[c] = std::max(chan_max[c], image.data[c * 784 + p]);
        const double top = std::max({chan_max[0], chan_max[1], chan_max[2]});
        if (top == 0.0) return 1.0;
        std::array<double, 3> dir{};
        for (std::size_t c = 0; c < 3; ++c) dir[c] = chan_max[c] / top;
        if (const std::array<double, 3>* known = match_known(dir))
            return std::max({(*known)[0], (*known)[1], (*known)[2]});
        return 1.0;
    }

    std::vector<std::array<double, 3>> known_;
};

// Fully-connected codec trained from data: two encoders share the flattened
// image, the decoder maps [s, v] back through a sigmoid so outputs stay in
// [0, 1]. Variation samples come from a unit normal over the v code space.
class LearnedGenerator final : public Generator {
  public:
    struct Dims {
        std::size_t input_dim = 3 * 28 * 28;
        std::size_t semantic_dim = 32;
        std::size_t variation_dim = 8;
        std::size_t hidden_dim = 256;
    };

    LearnedGenerator(Dims dims, RngStream& init_rng) : dims_(dims) {
        add_layer("gen.enc_s.0", dims_.input_dim, dims_.hidden_dim, init_rng);
        add_layer("gen.enc_s.1", dims_.hidden_dim, dims_.semantic_dim, init_rng);
        add_layer("gen.enc_v.0", dims_.input_dim, dims_.hidden_dim, init_rng);
        add_layer("gen.enc_v.1", dims_.hidden_dim, dims_.variation_dim, init_rng);
        add_layer("gen.dec.0", dims_.semantic_dim + dims_.variation_dim,
                  dims_.hidden_dim, init_rng);
        add_layer("gen.dec.1", dims_.hidden_dim, dims_.input_dim, init_rng);
    }

    GeneratorMode mode() const override { return GeneratorMode::Learned; }
    const Dims& dims() const { return dims_; }

    // Graph builders over batches [n x input_dim]; used for training and,
    // with constant inputs, for inference.
    Var encode_semantic_graph(const Var& x) { return mlp(x, 0); }
    Var encode_variation_graph(const Var& x) { return mlp(x, 4); }
    Var decode_graph(const Var& s, const Var& v) {
        Var h = relu(affine(concat_cols(s, v), var_param(params_[8]),
                            var_param(params_[9])));
        return sigmoid(affine(h, var_param(params_[10]), var_param(params_[11])));
    }

    Tensor encode_semantic(const Tensor& image) const override {
        return run_row(image, dims_.input_dim, [&](const Var& x) {
            return const_cast<LearnedGenerator*>(this)->encode_semantic_graph(x);
        });
    }

    Tensor encode_variation(const Tensor& image) const override {
        return run_row(image, dims_.input_dim, [&](const Var& x) {
            return const_cast<LearnedGenerator*>(this)->encode_variation_graph(x);
        });
    }

    Tensor decode(const Tensor& semantic, const Tensor& variation) const override {
        if (semantic.numel() != dims_.semantic_dim)
            throw ShapeError("decode: semantic code " + semantic.shape_str());
        if (variation.numel() != dims_.variation_dim)
            throw ShapeError("decode: variation code " + variation.shape_str());
        auto* self = const_cast<LearnedGenerator*>(this);
        const Var s = var_constant(semantic.reshaped({1, dims_.semantic_dim}));
        const Var v = var_constant(variation.reshaped({1, dims_.variation_dim}));
        Tensor flat = self->decode_graph(s, v)->value;
        return flat.reshaped({3, 28, 28});
    }

    Tensor sample_variation(RngStream& rng) const override {
        Tensor v({dims_.variation_dim});
        for (double& c : v.data) c = rng.normal();
        return v;
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        out.reserve(params_.size());
        for (Parameter& p : params_) out.push_back(&p);
        return out;
    }

    void save(const std::string& path) const {
        StateDict state;
        Tensor meta({4});
        meta.data = {static_cast<double>(dims_.input_dim),
                     static_cast<double>(dims_.semantic_dim),
                     static_cast<double>(dims_.variation_dim),
                     static_cast<double>(dims_.hidden_dim)};
        state.emplace_back("gen.dims", std::move(meta));
        for (const Parameter& p : params_) state.emplace_back(p.name, p.value);
        save_checkpoint(path, state);
    }

    static LearnedGenerator load(const std::string& path) {
        const StateDict state = load_checkpoint(path);
        if (state.empty() || state.front().first != "gen.dims" ||
            state.front().second.numel() != 4)
            throw FormatError("generator checkpoint '" + path +
                              "': missing gen.dims header tensor");
        const Tensor& meta = state.front().second;
        Dims dims;
        dims.input_dim = static_cast<std::size_t>(meta.data[0]);
        dims.semantic_dim = static_cast<std::size_t>(meta.data[1]);
        dims.variation_dim = static_cast<std::size_t>(meta.data[2]);
        dims.hidden_dim = static_cast<std::size_t>(meta.data[3]);
        RngStream scratch(0);
        LearnedGenerator gen(dims, scratch);
        std::size_t next = 1;
        for (Parameter& p : gen.params_) {
            if (next >= state.size() || state[next].first != p.name)
                throw FormatError("generator checkpoint '" + path +
                                  "': missing tensor '" + p.name + "'");
            if (!state[next].second.same_shape(p.value))
                throw FormatError("generator checkpoint '" + path + "': tensor '" +
                                  p.name + "' shape " +
                                  state[next].second.shape_str() + " != expected " +
                                  p.value.shape_str());
            p.value = state[next].second;
            ++next;
        }
        return gen;
    }

  private:
    void add_layer(const std::string& base, std::size_t in, std::size_t out,
                   RngStream& rng) {
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        Tensor w({in, out});
        for (double& v : w.data) v = rng.uniform(-bound, bound);
        params_.emplace_back(base + ".W", std::move(w));
        params_.emplace_back(base + ".b", Tensor::zeros({out}));
    }

    Var mlp(const Var& x, std::size_t first_param) {
        Var h = relu(affine(x, var_param(params_[first_param]),
                            var_param(params_[first_param + 1])));
        return affine(h, var_param(params_[first_param + 2]),
                      var_param(params_[first_param + 3]));
    }

    template <typename Fn>
    static Tensor run_row(const Tensor& image, std::size_t dim, Fn&& graph) {
        if (image.numel() != dim)
            throw ShapeError("generator: image " + image.shape_str() +
                             " does not flatten to " + std::to_string(dim));
        const Var x = var_constant(image.reshaped({1, dim}));
        Tensor out = graph(x)->value;
        return out.reshaped({out.numel()});
    }

    Dims dims_;
    std::vector<Parameter> params_;
};

struct TrainGeneratorConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 32;
    double lr = 0.05;
    double swap_weight = 0.5;
    std::uint64_t seed = 0;
};

// Trains the learned codec with l1 reconstruction plus a swap-consistency
// term: decoding (s_i, v_j) must preserve the semantic code of sample i and
// the variation code of sample j. Returns the mean batch loss per epoch.
inline std::vector<double> train_generator(LearnedGenerator& gen,
                                           const std::vector<ColoredSample>& data,
                                           const TrainGeneratorConfig& cfg) {
    if (data.size() < 2)
        throw ContractError("train_generator: need at least 2 samples");
    if (cfg.batch_size < 2)
        throw ConfigError("train_generator: batch_size must be >= 2");

    const std::size_t dim = gen.dims().input_dim;
    const auto params = gen.parameters();
    RngStream shuffle_rng(derive_seed(cfg.seed, 11));
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> epoch_losses;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order, shuffle_rng);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start + 2 <= order.size();
             start += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - start);
            if (n < 2) break;
            Tensor xb({n, dim});
            Tensor xb_rot({n, dim});
            for (std::size_t i = 0; i < n; ++i) {
                const Tensor& img = data[order[start + i]].image;
                const Tensor& rot = data[order[start + (i + 1) % n]].image;
                std::copy(img.data.begin(), img.data.end(),
                          xb.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
                std::copy(rot.data.begin(), rot.data.end(),
                          xb_rot.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
            }
            const Var x = var_constant(std::move(xb));
            const Var x_rot = var_constant(std::move(xb_rot));

            const Var s = gen.encode_semantic_graph(x);
            const Var v = gen.encode_variation_graph(x);
            const Var recon = gen.decode_graph(s, v);
            Var loss = l1_mean(recon, x);

            const Var v_rot = gen.encode_variation_graph(x_rot);
            const Var swapped = gen.decode_graph(s, v_rot);
            const Var s_back = gen.encode_semantic_graph(swapped);
            const Var v_back = gen.encode_variation_graph(swapped);
            loss = add(loss, scale(add(l1_mean(s_back, s), l1_mean(v_back, v_rot)),
                                   cfg.swap_weight));

            const double lv = loss->value.data[0];
            if (!std::isfinite(lv))
                throw TrainingError("train_generator: non-finite loss at epoch " +
                                    std::to_string(epoch) + ", batch " +
                                    std::to_string(batches));
            zero_grads(params);
            backward(loss);
            sgd_step(params, cfg.lr);
            total += lv;
            ++batches;
        }
        epoch_losses.push_back(batches ? total / static_cast<double>(batches) : 0.0);
    }
    return epoch_losses;
}

} // namespace osdg
