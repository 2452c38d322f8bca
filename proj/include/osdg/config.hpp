#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "osdg/datasets.hpp"
#include "osdg/detectors.hpp"
#include "osdg/errors.hpp"
#include "osdg/generator.hpp"
#include "osdg/glyphs.hpp"
#include "osdg/idx.hpp"
#include "osdg/network.hpp"
#include "osdg/objective.hpp"

namespace osdg {

using nlohmann::json;

namespace detail {

// Unknown keys are configuration errors: a typo must fail loudly instead of
// silently falling back to a default.
inline void require_keys(const json& obj, const std::string& path,
                         std::initializer_list<const char*> allowed) {
    if (!obj.is_object())
        throw ConfigError("config: '" + path + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) {
                ok = true;
                break;
            }
        if (!ok)
            throw ConfigError("config: unknown key '" +
                              (path.empty() ? key : path + "." + key) + "'");
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: key '") + key + "': " + e.what());
    }
}

inline std::array<double, 3> palette_from(const json& arr, const std::string& path) {
    if (!arr.is_array() || arr.size() != 3)
        throw ConfigError("config: '" + path + "' must be an array of 3 numbers");
    std::array<double, 3> out{};
    for (std::size_t i = 0; i < 3; ++i) out[i] = arr.at(i).get<double>();
    return out;
}

} // namespace detail

struct DataConfig {
    std::string source = "synthetic"; // synthetic | idx
    std::string dir;                  // empty -> OSDG_DATA_DIR -> "."
    std::string images = "images.idx";
    std::string labels = "labels.idx";
    std::size_t synthetic_count = 12000;
    std::size_t train_size = 5000;
    std::size_t test_size = 2000;
    std::vector<int> id_classes{0, 1, 2, 3, 4, 5, 6};
    std::vector<int> ood_classes{7, 8, 9};
    // Training hues share a color family while the held-out hue lights a
    // channel the training domains never touch; that keeps the covariate
    // shift between train and test domains genuinely out of support.
    std::vector<std::array<double, 3>> train_palettes{
        {1.0, 0.1, 0.0}, {0.85, 0.25, 0.0}, {0.7, 0.05, 0.0}};
    std::array<double, 3> test_palette{0.0, 0.0, 1.0};
};

struct NetworkConfig {
    std::vector<std::size_t> hidden_sizes;
    std::size_t feature_dim = 64;
};

struct LossConfig {
    // Heavier invariance weights push the feature map toward a constant
    // (every ReLU dies and the trace flattens at ln K), so the default keeps
    // the regularizers mild relative to the classification term.
    double zeta1 = 0.1;
    double zeta2 = 0.05;
    double gamma = -3.0;
    double temperature = 1.0;
};

struct TrainConfig {
    double lr = 0.05;
    std::size_t epochs = 15;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;
};

struct GeneratorConfig {
    std::string mode = "oracle"; // oracle | learned
    std::size_t semantic_dim = 32;
    std::size_t variation_dim = 8;
    std::size_t hidden_dim = 256;
    std::string checkpoint; // required for learned mode at train time
};

struct SearchSpace {
    double lr_min = 1e-4, lr_max = 1e-1;
    double zeta1_min = 1e-3, zeta1_max = 10.0;
    double zeta2_min = 1e-3, zeta2_max = 10.0;
    double gamma_min = -15.0, gamma_max = -1.0;
    std::size_t runs_per_trial = 30;
    std::size_t trials = 3;
    double min_ood_fraction = 0.5;
    double validation_fraction = 0.2;

    void validate() const {
        if (lr_min <= 0.0 || lr_max < lr_min)
            throw ConfigError("search: need 0 < lr_min <= lr_max");
        if (zeta1_min <= 0.0 || zeta1_max < zeta1_min)
            throw ConfigError("search: need 0 < zeta1_min <= zeta1_max");
        if (zeta2_min <= 0.0 || zeta2_max < zeta2_min)
            throw ConfigError("search: need 0 < zeta2_min <= zeta2_max");
        if (gamma_max >= 0.0 || gamma_min > gamma_max)
            throw ConfigError("search: need gamma_min <= gamma_max < 0");
        if (runs_per_trial < 1)
            throw ConfigError("search: runs_per_trial must be >= 1");
        if (trials < 1) throw ConfigError("search: trials must be >= 1");
        if (min_ood_fraction < 0.0 || min_ood_fraction > 1.0)
            throw ConfigError("search: min_ood_fraction must be in [0, 1]");
        if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
            throw ConfigError("search: validation_fraction must be in (0, 1)");
    }
};

struct ExperimentConfig {
    DataConfig data;
    NetworkConfig network;
    LossConfig loss;
    TrainConfig train;
    GeneratorConfig generator;
    BlendSpec blend;
    SearchSpace search;
    std::vector<std::string> detectors{"energy", "msp", "ddu"};
    std::string output_dir = "out";
    std::string arm = "fsi"; // fsi | erm

    std::size_t num_classes() const { return data.id_classes.size(); }

    LossWeights loss_weights() const {
        if (arm == "erm") return LossWeights::erm();
        return LossWeights(loss.zeta1, loss.zeta2, loss.gamma, loss.temperature);
    }

    NetworkSpec network_spec() const {
        NetworkSpec spec;
        spec.input_dim = 3 * 28 * 28;
        spec.hidden_sizes = network.hidden_sizes;
        spec.feature_dim = network.feature_dim;
        spec.num_classes = num_classes();
        return spec;
    }

    std::string data_dir() const {
        if (!data.dir.empty()) return data.dir;
        if (const char* env = std::getenv("OSDG_DATA_DIR")) return env;
        return ".";
    }

    SplitSpec split_spec() const {
        SplitSpec spec;
        for (std::size_t d = 0; d < data.train_palettes.size(); ++d)
            spec.train_domains.push_back(
                {static_cast<int>(d), data.train_palettes[d]});
        spec.test_domain = {static_cast<int>(data.train_palettes.size()),
                            data.test_palette};
        spec.id_classes = data.id_classes;
        spec.ood_classes = data.ood_classes;
        spec.train_cap = data.train_size;
        spec.test_cap = data.test_size;
        spec.seed = derive_seed(train.seed, 1);
        return spec;
    }

    std::vector<std::array<double, 3>> known_palettes() const {
        std::vector<std::array<double, 3>> out = data.train_palettes;
        out.push_back(data.test_palette);
        return out;
    }

    void validate() const {
        if (data.source != "synthetic" && data.source != "idx")
            throw ConfigError("config: data.source must be 'synthetic' or 'idx'");
        if (data.source == "synthetic" && data.synthetic_count == 0)
            throw ConfigError("config: data.synthetic_count must be positive");
        if (data.train_size == 0 || data.test_size == 0)
            throw ConfigError("config: train_size and test_size must be positive");
        if (data.id_classes.size() < 2)
            throw ConfigError("config: need at least 2 id_classes");
        if (data.train_palettes.empty())
            throw ConfigError("config: need at least one train palette");
        if (network.feature_dim == 0)
            throw ConfigError("config: network.feature_dim must be positive");
        if (train.lr <= 0.0) throw ConfigError("config: train.lr must be > 0");
        if (train.epochs == 0 || train.batch_size == 0)
            throw ConfigError("config: epochs and batch_size must be positive");
        if (generator.mode != "oracle" && generator.mode != "learned")
            throw ConfigError("config: generator.mode must be 'oracle' or 'learned'");
        if (generator.mode == "learned" &&
            (generator.semantic_dim == 0 || generator.variation_dim == 0 ||
             generator.hidden_dim == 0))
            throw ConfigError("config: learned generator dims must be positive");
        if (arm != "fsi" && arm != "erm")
            throw ConfigError("config: arm must be 'fsi' or 'erm'");
        if (detectors.empty())
            throw ConfigError("config: detector list must be nonempty");
        for (const std::string& d : detectors) (void)parse_detector(d);
        blend.validate();
        search.validate();
        split_spec().validate();
        (void)loss_weights();
    }
};

inline ExperimentConfig parse_experiment_config(const json& root) {
    detail::require_keys(root, "", {"data", "network", "loss", "train", "generator",
                                    "blend", "search", "detectors", "output_dir",
                                    "arm"});
    ExperimentConfig cfg;

    if (root.contains("data")) {
        const json& d = root.at("data");
        detail::require_keys(d, "data",
                             {"source", "dir", "images", "labels", "synthetic_count",
                              "train_size", "test_size", "id_classes", "ood_classes",
                              "train_palettes", "test_palette"});
        cfg.data.source = detail::get_or(d, "source", cfg.data.source);
        cfg.data.dir = detail::get_or(d, "dir", cfg.data.dir);
        cfg.data.images = detail::get_or(d, "images", cfg.data.images);
        cfg.data.labels = detail::get_or(d, "labels", cfg.data.labels);
        cfg.data.synthetic_count =
            detail::get_or(d, "synthetic_count", cfg.data.synthetic_count);
        cfg.data.train_size = detail::get_or(d, "train_size", cfg.data.train_size);
        cfg.data.test_size = detail::get_or(d, "test_size", cfg.data.test_size);
        cfg.data.id_classes = detail::get_or(d, "id_classes", cfg.data.id_classes);
        cfg.data.ood_classes = detail::get_or(d, "ood_classes", cfg.data.ood_classes);
        if (d.contains("train_palettes")) {
            cfg.data.train_palettes.clear();
            const json& arr = d.at("train_palettes");
            if (!arr.is_array())
                throw ConfigError("config: data.train_palettes must be an array");
            for (std::size_t i = 0; i < arr.size(); ++i)
                cfg.data.train_palettes.push_back(detail::palette_from(
                    arr.at(i), "data.train_palettes[" + std::to_string(i) + "]"));
        }
        if (d.contains("test_palette"))
            cfg.data.test_palette =
                detail::palette_from(d.at("test_palette"), "data.test_palette");
    }

    if (root.contains("network")) {
        const json& n = root.at("network");
        detail::require_keys(n, "network", {"hidden_sizes", "feature_dim"});
        cfg.network.hidden_sizes =
            detail::get_or(n, "hidden_sizes", cfg.network.hidden_sizes);
        cfg.network.feature_dim =
            detail::get_or(n, "feature_dim", cfg.network.feature_dim);
    }

    if (root.contains("loss")) {
        const json& l = root.at("loss");
        detail::require_keys(l, "loss", {"zeta1", "zeta2", "gamma", "temperature"});
        cfg.loss.zeta1 = detail::get_or(l, "zeta1", cfg.loss.zeta1);
        cfg.loss.zeta2 = detail::get_or(l, "zeta2", cfg.loss.zeta2);
        cfg.loss.gamma = detail::get_or(l, "gamma", cfg.loss.gamma);
        cfg.loss.temperature = detail::get_or(l, "temperature", cfg.loss.temperature);
    }

    if (root.contains("train")) {
        const json& t = root.at("train");
        detail::require_keys(t, "train", {"lr", "epochs", "batch_size", "seed"});
        cfg.train.lr = detail::get_or(t, "lr", cfg.train.lr);
        cfg.train.epochs = detail::get_or(t, "epochs", cfg.train.epochs);
        cfg.train.batch_size = detail::get_or(t, "batch_size", cfg.train.batch_size);
        cfg.train.seed = detail::get_or(t, "seed", cfg.train.seed);
    }

    if (root.contains("generator")) {
        const json& g = root.at("generator");
        detail::require_keys(g, "generator",
                             {"mode", "semantic_dim", "variation_dim", "hidden_dim",
                              "checkpoint"});
        cfg.generator.mode = detail::get_or(g, "mode", cfg.generator.mode);
        cfg.generator.semantic_dim =
            detail::get_or(g, "semantic_dim", cfg.generator.semantic_dim);
        cfg.generator.variation_dim =
            detail::get_or(g, "variation_dim", cfg.generator.variation_dim);
        cfg.generator.hidden_dim =
            detail::get_or(g, "hidden_dim", cfg.generator.hidden_dim);
        cfg.generator.checkpoint =
            detail::get_or(g, "checkpoint", cfg.generator.checkpoint);
    }

    if (root.contains("blend")) {
        const json& b = root.at("blend");
        detail::require_keys(b, "blend", {"magnitude_min", "magnitude_max",
                                          "coeff_min", "coeff_max"});
        cfg.blend.magnitude_min =
            detail::get_or(b, "magnitude_min", cfg.blend.magnitude_min);
        cfg.blend.magnitude_max =
            detail::get_or(b, "magnitude_max", cfg.blend.magnitude_max);
        cfg.blend.coeff_min = detail::get_or(b, "coeff_min", cfg.blend.coeff_min);
        cfg.blend.coeff_max = detail::get_or(b, "coeff_max", cfg.blend.coeff_max);
    }

    if (root.contains("search")) {
        const json& s = root.at("search");
        detail::require_keys(s, "search",
                             {"lr_min", "lr_max", "zeta1_min", "zeta1_max",
                              "zeta2_min", "zeta2_max", "gamma_min", "gamma_max",
                              "runs_per_trial", "trials", "min_ood_fraction",
                              "validation_fraction"});
        cfg.search.lr_min = detail::get_or(s, "lr_min", cfg.search.lr_min);
        cfg.search.lr_max = detail::get_or(s, "lr_max", cfg.search.lr_max);
        cfg.search.zeta1_min = detail::get_or(s, "zeta1_min", cfg.search.zeta1_min);
        cfg.search.zeta1_max = detail::get_or(s, "zeta1_max", cfg.search.zeta1_max);
        cfg.search.zeta2_min = detail::get_or(s, "zeta2_min", cfg.search.zeta2_min);
        cfg.search.zeta2_max = detail::get_or(s, "zeta2_max", cfg.search.zeta2_max);
        cfg.search.gamma_min = detail::get_or(s, "gamma_min", cfg.search.gamma_min);
        cfg.search.gamma_max = detail::get_or(s, "gamma_max", cfg.search.gamma_max);
        cfg.search.runs_per_trial =
            detail::get_or(s, "runs_per_trial", cfg.search.runs_per_trial);
        cfg.search.trials = detail::get_or(s, "trials", cfg.search.trials);
        cfg.search.min_ood_fraction =
            detail::get_or(s, "min_ood_fraction", cfg.search.min_ood_fraction);
        cfg.search.validation_fraction =
            detail::get_or(s, "validation_fraction", cfg.search.validation_fraction);
    }

    cfg.detectors = detail::get_or(root, "detectors", cfg.detectors);
    cfg.output_dir = detail::get_or(root, "output_dir", cfg.output_dir);
    cfg.arm = detail::get_or(root, "arm", cfg.arm);

    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    json root;
    try {
        is >> root;
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    return parse_experiment_config(root);
}

// Canonical snapshot: every effective field serialized with sorted keys, so
// equal configurations produce byte-identical snapshots.
inline json config_to_json(const ExperimentConfig& cfg) {
    json d;
    d["source"] = cfg.data.source;
    d["dir"] = cfg.data.dir;
    d["images"] = cfg.data.images;
    d["labels"] = cfg.data.labels;
    d["synthetic_count"] = cfg.data.synthetic_count;
    d["train_size"] = cfg.data.train_size;
    d["test_size"] = cfg.data.test_size;
    d["id_classes"] = cfg.data.id_classes;
    d["ood_classes"] = cfg.data.ood_classes;
    d["train_palettes"] = cfg.data.train_palettes;
    d["test_palette"] = cfg.data.test_palette;

    json root;
    root["data"] = std::move(d);
    root["network"] = {{"hidden_sizes", cfg.network.hidden_sizes},
                       {"feature_dim", cfg.network.feature_dim}};
    root["loss"] = {{"zeta1", cfg.loss.zeta1},
                    {"zeta2", cfg.loss.zeta2},
                    {"gamma", cfg.loss.gamma},
                    {"temperature", cfg.loss.temperature}};
    root["train"] = {{"lr", cfg.train.lr},
                     {"epochs", cfg.train.epochs},
                     {"batch_size", cfg.train.batch_size},
                     {"seed", cfg.train.seed}};
    root["generator"] = {{"mode", cfg.generator.mode},
                         {"semantic_dim", cfg.generator.semantic_dim},
                         {"variation_dim", cfg.generator.variation_dim},
                         {"hidden_dim", cfg.generator.hidden_dim},
                         {"checkpoint", cfg.generator.checkpoint}};
    root["blend"] = {{"magnitude_min", cfg.blend.magnitude_min},
                     {"magnitude_max", cfg.blend.magnitude_max},
                     {"coeff_min", cfg.blend.coeff_min},
                     {"coeff_max", cfg.blend.coeff_max}};
    root["search"] = {{"lr_min", cfg.search.lr_min},
                      {"lr_max", cfg.search.lr_max},
                      {"zeta1_min", cfg.search.zeta1_min},
                      {"zeta1_max", cfg.search.zeta1_max},
                      {"zeta2_min", cfg.search.zeta2_min},
                      {"zeta2_max", cfg.search.zeta2_max},
                      {"gamma_min", cfg.search.gamma_min},
                      {"gamma_max", cfg.search.gamma_max},
                      {"runs_per_trial", cfg.search.runs_per_trial},
                      {"trials", cfg.search.trials},
                      {"min_ood_fraction", cfg.search.min_ood_fraction},
                      {"validation_fraction", cfg.search.validation_fraction}};
    root["detectors"] = cfg.detectors;
    root["output_dir"] = cfg.output_dir;
    root["arm"] = cfg.arm;
    return root;
}

// Produces the raw grayscale pool the split is drawn from.
inline RawDigitSet make_raw_digits(const ExperimentConfig& cfg) {
    if (cfg.data.source == "synthetic") {
        return make_synthetic_digits(cfg.data.synthetic_count,
                                     derive_seed(cfg.train.seed, 2));
    }
    const std::string dir = cfg.data_dir();
    return load_idx(dir + "/" + cfg.data.images, dir + "/" + cfg.data.labels);
}

// 64-bit FNV-1a over the canonical config snapshot plus the seed: a compact
// content address for "same inputs" checks in manifests.
inline std::string content_hash(const ExperimentConfig& cfg, std::uint64_t seed) {
    const std::string snapshot = config_to_json(cfg).dump();
    std::uint64_t h = 0xCBF29CE484222325ULL;
    const auto mix = [&h](unsigned char byte) {
        h ^= byte;
        h *= 0x100000001B3ULL;
    };
    for (char c : snapshot) mix(static_cast<unsigned char>(c));
    for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace osdg
