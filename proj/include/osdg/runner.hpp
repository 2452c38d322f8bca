#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "osdg/checkpoint.hpp"
#include "osdg/config.hpp"
#include "osdg/datasets.hpp"
#include "osdg/detectors.hpp"
#include "osdg/errors.hpp"
#include "osdg/generator.hpp"
#include "osdg/metrics.hpp"
#include "osdg/network.hpp"
#include "osdg/objective.hpp"

namespace osdg {

// Stream ids for purpose-isolated RNG derivation. Keeping transfer/synthesis
// streams separate from the shuffle stream means an ERM run (which never
// draws from them) still sees the exact same data order as its FSI twin.
namespace stream {
constexpr std::uint64_t kSplit = 1;
constexpr std::uint64_t kRawData = 2;
constexpr std::uint64_t kInit = 3;
constexpr std::uint64_t kShuffle = 4;
constexpr std::uint64_t kTransfer = 5;
constexpr std::uint64_t kSynth = 6;
constexpr std::uint64_t kValidation = 7;
constexpr std::uint64_t kHyperDraw = 8;
} // namespace stream

struct RunManifest {
    std::string run_id;
    std::string arm;
    std::uint64_t seed = 0;
    std::string content_hash;
    double wall_clock_seconds = 0.0;
    std::string status = "ok";
    std::string error;
    std::vector<LossBreakdown> epoch_losses;
    double validation_auroc = std::numeric_limits<double>::quiet_NaN();
    std::string checkpoint_path;
    std::vector<LabeledMetricsRow> metrics;
    json config_snapshot;
};

inline json manifest_to_json(const RunManifest& m) {
    json j;
    j["run_id"] = m.run_id;
    j["arm"] = m.arm;
    j["seed"] = m.seed;
    j["content_hash"] = m.content_hash;
    j["wall_clock_seconds"] = m.wall_clock_seconds;
    j["status"] = m.status;
    j["error"] = m.error;
    j["epoch_losses"] = json::array();
    for (const LossBreakdown& b : m.epoch_losses)
        j["epoch_losses"].push_back({{"cross_entropy", b.cross_entropy},
                                     {"r_feature", b.r_feature},
                                     {"r_energy", b.r_energy},
                                     {"total", b.total}});
    if (std::isnan(m.validation_auroc))
        j["validation_auroc"] = nullptr;
    else
        j["validation_auroc"] = m.validation_auroc;
    j["checkpoint"] = m.checkpoint_path;
    j["metrics"] = json::array();
    for (const LabeledMetricsRow& r : m.metrics)
        j["metrics"].push_back({{"run_id", r.run_id},
                                {"seed", r.seed},
                                {"ood_classes", r.ood_classes},
                                {"detector", r.detector},
                                {"auroc", r.metrics.auroc},
                                {"aupr", r.metrics.aupr},
                                {"id_accuracy", r.metrics.id_accuracy},
                                {"n_id", r.metrics.n_id},
                                {"n_ood", r.metrics.n_ood}});
    j["config"] = m.config_snapshot;
    return j;
}

inline RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    try {
        m.run_id = j.at("run_id").get<std::string>();
        m.arm = j.at("arm").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.content_hash = j.at("content_hash").get<std::string>();
        m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
        m.status = j.at("status").get<std::string>();
        m.error = j.at("error").get<std::string>();
        for (const json& e : j.at("epoch_losses")) {
            LossBreakdown b;
            b.cross_entropy = e.at("cross_entropy").get<double>();
            b.r_feature = e.at("r_feature").get<double>();
            b.r_energy = e.at("r_energy").get<double>();
            b.total = e.at("total").get<double>();
            m.epoch_losses.push_back(b);
        }
        if (!j.at("validation_auroc").is_null())
            m.validation_auroc = j.at("validation_auroc").get<double>();
        m.checkpoint_path = j.at("checkpoint").get<std::string>();
        for (const json& r : j.at("metrics")) {
            LabeledMetricsRow row;
            row.run_id = r.at("run_id").get<std::string>();
            row.seed = r.at("seed").get<std::uint64_t>();
            row.ood_classes = r.at("ood_classes").get<std::vector<int>>();
            row.detector = r.at("detector").get<std::string>();
            row.metrics.auroc = r.at("auroc").get<double>();
            row.metrics.aupr = r.at("aupr").get<double>();
            row.metrics.id_accuracy = r.at("id_accuracy").get<double>();
            row.metrics.n_id = r.at("n_id").get<std::size_t>();
            row.metrics.n_ood = r.at("n_ood").get<std::size_t>();
            m.metrics.push_back(std::move(row));
        }
        m.config_snapshot = j.at("config");
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    return m;
}

inline void save_manifest(const std::string& path, const RunManifest& m) {
    auto os = open_output(path);
    os << manifest_to_json(m).dump(2) << '\n';
    if (!os) throw FormatError("manifest: write to '" + path + "' failed");
}

inline RunManifest load_manifest(const std::string& path) {
    auto is = open_input(path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw FormatError("manifest '" + path + "': " + e.what());
    }
    return manifest_from_json(j);
}

inline std::unique_ptr<Generator> make_generator(const ExperimentConfig& cfg) {
    if (cfg.generator.mode == "oracle")
        return std::make_unique<OracleGenerator>(cfg.known_palettes());
    if (cfg.generator.checkpoint.empty())
        throw ConfigError("learned generator mode requires generator.checkpoint");
    return std::make_unique<LearnedGenerator>(
        LearnedGenerator::load(cfg.generator.checkpoint));
}

namespace detail {

inline Tensor flatten_rows(const std::vector<ColoredSample>& samples,
                           const std::vector<std::size_t>& idx, std::size_t begin,
                           std::size_t end) {
    const std::size_t dim = 3 * 28 * 28;
    Tensor out({end - begin, dim});
    for (std::size_t i = begin; i < end; ++i) {
        const Tensor& img = samples[idx[i]].image;
        std::copy(img.data.begin(), img.data.end(),
                  out.data.begin() +
                      static_cast<std::ptrdiff_t>((i - begin) * dim));
    }
    return out;
}

inline void copy_row(Tensor& dst, std::size_t row, const Tensor& img) {
    std::copy(img.data.begin(), img.data.end(),
              dst.data.begin() + static_cast<std::ptrdiff_t>(row * img.numel()));
}

inline std::size_t draw_partner(const std::vector<ColoredSample>& pool,
                                std::size_t anchor, RngStream& rng) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const std::size_t j = rng.uniform_index(pool.size());
        if (pool[j].label != pool[anchor].label) return j;
    }
    throw ContractError("synthesis: could not find a differently-labeled partner "
                        "(does the pool contain a single class?)");
}

} // namespace detail

// One pass of g and h over a sample list, chunked to bound graph size.
inline std::pair<Tensor, Tensor> forward_dataset(Network& net,
                                                 const std::vector<ColoredSample>& samples,
                                                 std::size_t chunk = 512) {
    const std::size_t n = samples.size();
    const std::size_t r = net.spec().feature_dim;
    const std::size_t k = net.spec().num_classes;
    Tensor features({n, r});
    Tensor logits({n, k});
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t end = std::min(n, start + chunk);
        const Var x = var_constant(detail::flatten_rows(samples, idx, start, end));
        const Var f = net.features(x);
        const Var z = net.logits(f);
        for (std::size_t i = start; i < end; ++i) {
            for (std::size_t j = 0; j < r; ++j)
                features.at(i, j) = f->value.at(i - start, j);
            for (std::size_t j = 0; j < k; ++j)
                logits.at(i, j) = z->value.at(i - start, j);
        }
    }
    return {std::move(features), std::move(logits)};
}

// Inputs for post-hoc detector evaluation; train-side features are only
// required when a detector needs fitting.
struct DetectorEvalData {
    Tensor test_features; // [n x r]
    Tensor test_logits;   // [n x K]
    std::vector<int> test_labels; // compact labels, kOodLabel for outliers
    const Tensor* train_features = nullptr;
    const std::vector<int>* train_labels = nullptr;
    double temperature = 1.0;
    double ridge = 1e-3;
};

inline ScoredTestSet score_test_set(const DetectorEvalData& data,
                                    const Detector& det) {
    const std::size_t n = data.test_features.shape[0];
    const std::size_t r = data.test_features.shape[1];
    const std::size_t k = data.test_logits.shape[1];
    ScoredTestSet entries(n);
    std::vector<double> feature(r), logit_row(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < r; ++j) feature[j] = data.test_features.at(i, j);
        std::size_t best = 0;
        for (std::size_t j = 0; j < k; ++j) {
            logit_row[j] = data.test_logits.at(i, j);
            if (logit_row[j] > logit_row[best]) best = j;
        }
        entries[i].ood_score = det.score(feature, logit_row);
        entries[i].is_ood = data.test_labels[i] == kOodLabel;
        entries[i].true_label = data.test_labels[i];
        entries[i].predicted_label = static_cast<int>(best);
    }
    return entries;
}

inline std::vector<std::pair<std::string, MetricsRow>>
evaluate_detectors(const DetectorEvalData& data,
                   const std::vector<std::string>& detector_names,
                   std::size_t num_classes) {
    if (data.test_features.rank() != 2 || data.test_logits.rank() != 2 ||
        data.test_features.shape[0] != data.test_logits.shape[0] ||
        data.test_features.shape[0] != data.test_labels.size())
        throw ShapeError("evaluate_detectors: inconsistent test inputs");
    std::vector<std::pair<std::string, MetricsRow>> out;
    for (const std::string& name : detector_names) {
        Detector det(parse_detector(name), data.temperature);
        if (det.needs_fit()) {
            if (data.train_features == nullptr || data.train_labels == nullptr)
                throw ContractError("detector '" + name +
                                    "' needs fitting but no train features were "
                                    "supplied");
            det.fit(*data.train_features, *data.train_labels, num_classes,
                    data.ridge);
        }
        out.emplace_back(name, compute_metrics(score_test_set(data, det)));
    }
    return out;
}

// Evaluates a trained network over a split with every requested detector.
// Train-side features are computed only when some detector needs a fit.
inline std::vector<LabeledMetricsRow>
evaluate_network(Network& net, const Split& split, const ExperimentConfig& cfg,
                 const std::string& run_id, std::uint64_t seed) {
    DetectorEvalData data;
    auto [tf, tl] = forward_dataset(net, split.test);
    data.test_features = std::move(tf);
    data.test_logits = std::move(tl);
    data.test_labels.reserve(split.test.size());
    for (const ColoredSample& s : split.test) data.test_labels.push_back(s.label);
    data.temperature = cfg.loss.temperature;

    bool any_fit = false;
    for (const std::string& name : cfg.detectors)
        any_fit = any_fit || Detector(parse_detector(name)).needs_fit();
    Tensor train_features;
    std::vector<int> train_labels;
    if (any_fit) {
        auto [ff, fl] = forward_dataset(net, split.train);
        train_features = std::move(ff);
        (void)fl;
        train_labels.reserve(split.train.size());
        for (const ColoredSample& s : split.train) train_labels.push_back(s.label);
        data.train_features = &train_features;
        data.train_labels = &train_labels;
    }

    std::vector<LabeledMetricsRow> rows;
    for (auto& [name, metrics] :
         evaluate_detectors(data, cfg.detectors, cfg.num_classes())) {
        LabeledMetricsRow row;
        row.run_id = run_id;
        row.seed = seed;
        row.ood_classes = cfg.data.ood_classes;
        row.detector = name;
        row.metrics = metrics;
        rows.push_back(std::move(row));
    }
    return rows;
}

struct TrainOptions {
    std::string run_id = "train";
    std::string out_dir;               // empty: write nothing
    double validation_fraction = 0.0;  // >0: hold out a tail of the train split
    bool quiet = false;
};

struct TrainOutput {
    RunManifest manifest;
    std::shared_ptr<Network> net;
    Split split;                          // train excludes any validation tail
    std::vector<ColoredSample> validation;
};

// Minimizes cross-entropy + zeta1 R_F + zeta2 R_E with seeded mini-batch SGD.
// Zero-weighted terms never execute, so the erm arm is plain cross-entropy
// over the identical data order. A non-finite loss aborts after persisting
// the last epoch-end state.
inline TrainOutput train_run(const ExperimentConfig& cfg, const TrainOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = cfg.train.seed;

    TrainOutput out;
    out.split = make_split(make_raw_digits(cfg), cfg.split_spec());
    if (opts.validation_fraction > 0.0) {
        const auto held = static_cast<std::size_t>(
            std::ceil(opts.validation_fraction *
                      static_cast<double>(out.split.train.size())));
        if (held == 0 || held >= out.split.train.size())
            throw ConfigError("train_run: validation fraction leaves no usable "
                              "train split");
        out.validation.assign(out.split.train.end() - static_cast<std::ptrdiff_t>(held),
                              out.split.train.end());
        out.split.train.resize(out.split.train.size() - held);
    }
    const std::vector<ColoredSample>& train = out.split.train;

    const LossWeights weights = cfg.loss_weights();
    const std::unique_ptr<Generator> gen =
        weights.zeta1() > 0.0 || weights.zeta2() > 0.0 || opts.validation_fraction > 0.0
            ? make_generator(cfg)
            : nullptr;

    RngStream init_rng(derive_seed(seed, stream::kInit));
    out.net = std::make_shared<Network>(cfg.network_spec(), init_rng);
    Network& net = *out.net;
    const auto params = net.parameters();

    RngStream shuffle_rng(derive_seed(seed, stream::kShuffle));
    RngStream transfer_rng(derive_seed(seed, stream::kTransfer));
    RngStream synth_rng(derive_seed(seed, stream::kSynth));

    if (!opts.out_dir.empty())
        std::filesystem::create_directories(opts.out_dir);

    RunManifest& m = out.manifest;
    m.run_id = opts.run_id;
    m.arm = cfg.arm;
    m.seed = seed;
    m.content_hash = content_hash(cfg, seed);
    m.config_snapshot = config_to_json(cfg);

    const std::size_t dim = 3 * 28 * 28;
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    StateDict last_good = net.state();

    for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        shuffle(order, shuffle_rng);
        LossBreakdown epoch_mean;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += cfg.train.batch_size) {
            const std::size_t end =
                std::min(order.size(), start + cfg.train.batch_size);
            const std::size_t n = end - start;
            Tensor x = detail::flatten_rows(train, order, start, end);
            std::vector<int> labels(n);
            for (std::size_t i = 0; i < n; ++i)
                labels[i] = train[order[start + i]].label;

            Tensor x_transfer;
            if (weights.zeta1() > 0.0) {
                x_transfer = Tensor({n, dim});
                for (std::size_t i = 0; i < n; ++i)
                    detail::copy_row(
                        x_transfer, i,
                        gen->domain_transfer(train[order[start + i]].image,
                                             transfer_rng));
            }
            Tensor x_synth;
            if (weights.zeta2() > 0.0) {
                x_synth = Tensor({n, dim});
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t a = synth_rng.uniform_index(train.size());
                    const std::size_t b = detail::draw_partner(train, a, synth_rng);
                    detail::copy_row(x_synth, i,
                                     gen->synth_ood(train[a].image, train[a].label,
                                                    train[b].image, train[b].label,
                                                    synth_rng, cfg.blend));
                }
            }

            LossGraph loss = total_loss(net, x, labels, x_transfer, x_synth, weights);
            if (!std::isfinite(loss.parts.total)) {
                if (!opts.out_dir.empty()) {
                    const std::string rescue =
                        opts.out_dir + "/checkpoint.last_good.bin";
                    save_checkpoint(rescue, last_good);
                    throw TrainingError("train_run: non-finite loss at epoch " +
                                        std::to_string(epoch) +
                                        "; last good state saved to '" + rescue +
                                        "'");
                }
                throw TrainingError("train_run: non-finite loss at epoch " +
                                    std::to_string(epoch));
            }
            zero_grads(params);
            backward(loss.total);
            sgd_step(params, cfg.train.lr);

            epoch_mean.cross_entropy += loss.parts.cross_entropy;
            epoch_mean.r_feature += loss.parts.r_feature;
            epoch_mean.r_energy += loss.parts.r_energy;
            epoch_mean.total += loss.parts.total;
            ++batches;
        }
        const double inv = 1.0 / static_cast<double>(batches);
        epoch_mean.cross_entropy *= inv;
        epoch_mean.r_feature *= inv;
        epoch_mean.r_energy *= inv;
        epoch_mean.total *= inv;
        m.epoch_losses.push_back(epoch_mean);
        last_good = net.state();
        if (!opts.quiet)
            std::cout << opts.run_id << " epoch " << epoch + 1 << "/"
                      << cfg.train.epochs << " loss " << epoch_mean.total << "\n";
    }

    m.metrics = evaluate_network(net, out.split, cfg, opts.run_id, seed);

    if (opts.validation_fraction > 0.0) {
        // Selection signal without test data: held-out ID samples against an
        // equal count of synthesized outliers, ranked by the energy score.
        RngStream val_rng(derive_seed(seed, stream::kValidation));
        std::vector<ColoredSample> val_set = out.validation;
        const std::size_t n_val = val_set.size();
        for (std::size_t i = 0; i < n_val; ++i) {
            const std::size_t a = val_rng.uniform_index(out.validation.size());
            const std::size_t b =
                detail::draw_partner(out.validation, a, val_rng);
            ColoredSample synth;
            synth.image = gen->synth_ood(out.validation[a].image,
                                         out.validation[a].label,
                                         out.validation[b].image,
                                         out.validation[b].label, val_rng, cfg.blend);
            synth.label = kOodLabel;
            synth.domain_id = -1;
            val_set.push_back(std::move(synth));
        }
        DetectorEvalData vdata;
        auto [vf, vl] = forward_dataset(net, val_set);
        vdata.test_features = std::move(vf);
        vdata.test_logits = std::move(vl);
        for (const ColoredSample& s : val_set) vdata.test_labels.push_back(s.label);
        vdata.temperature = cfg.loss.temperature;
        const Detector energy_det(DetectorKind::Energy, cfg.loss.temperature);
        m.validation_auroc = auroc(score_test_set(vdata, energy_det));
    }

    m.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!opts.out_dir.empty()) {
        m.checkpoint_path = opts.out_dir + "/checkpoint.bin";
        save_checkpoint(m.checkpoint_path, net.state());
        write_metrics_csv(opts.out_dir + "/metrics.csv", m.metrics);
        save_manifest(opts.out_dir + "/manifest.json", m);
    }
    return out;
}

// Loads a checkpoint and evaluates it over the config's split.
inline std::vector<LabeledMetricsRow>
evaluate_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                    const std::string& run_id) {
    RngStream init_rng(derive_seed(cfg.train.seed, stream::kInit));
    Network net(cfg.network_spec(), init_rng);
    net.load_state(load_checkpoint(checkpoint_path));
    const Split split = make_split(make_raw_digits(cfg), cfg.split_spec());
    return evaluate_network(net, split, cfg, run_id, cfg.train.seed);
}

struct SearchTrial {
    std::vector<int> ood_classes;
    int trial = 0;
    bool failed = false;
    std::string best_run_id;
    double best_validation_auroc = std::numeric_limits<double>::quiet_NaN();
    std::vector<LabeledMetricsRow> best_test_metrics;
    std::size_t runs_attempted = 0;
};

struct SearchResult {
    std::vector<SearchTrial> trials;
    std::vector<RunManifest> run_manifests;
};

namespace detail {

inline std::string join_classes(const std::vector<int>& classes, char sep) {
    std::string out;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(classes[i]);
    }
    return out;
}

} // namespace detail

// Full search protocol: for every held-out class selection and trial,
// draw runs_per_trial hyperparameter configurations, train each on a split
// whose validation tail supplies the selection signal, keep the best by
// validation AUROC, and report that run's true-test-domain metrics. Failed
// runs are recorded; a trial fails only when every run in it fails.
inline SearchResult random_search(const ExperimentConfig& base,
                                  const std::string& out_dir, bool quiet = true) {
    base.search.validate();
    std::set<int> universe_set(base.data.id_classes.begin(),
                               base.data.id_classes.end());
    universe_set.insert(base.data.ood_classes.begin(), base.data.ood_classes.end());
    const std::vector<int> universe(universe_set.begin(), universe_set.end());

    const auto schedule = enumerate_ood_selections(
        static_cast<int>(universe.size()), base.search.min_ood_fraction,
        static_cast<int>(base.search.trials));

    if (!out_dir.empty())
        std::filesystem::create_directories(out_dir + "/runs");

    SearchResult result;
    for (const auto& [block, trial] : schedule) {
        SearchTrial t;
        for (int idx : block) t.ood_classes.push_back(universe[static_cast<std::size_t>(idx)]);
        t.trial = trial;
        result.trials.push_back(std::move(t));
    }

    std::uint64_t run_index = 0;
    for (SearchTrial& trial : result.trials) {
        std::vector<int> id_classes;
        for (int c : universe)
            if (std::find(trial.ood_classes.begin(), trial.ood_classes.end(), c) ==
                trial.ood_classes.end())
                id_classes.push_back(c);

        double best_val = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < base.search.runs_per_trial; ++r, ++run_index) {
            const std::uint64_t run_seed = derive_seed(base.train.seed, run_index);
            RngStream hp(derive_seed(run_seed, stream::kHyperDraw));

            ExperimentConfig cfg = base;
            cfg.data.id_classes = id_classes;
            cfg.data.ood_classes = trial.ood_classes;
            cfg.train.seed = run_seed;
            cfg.train.lr = std::exp(hp.uniform(std::log(base.search.lr_min),
                                               std::log(base.search.lr_max)));
            cfg.loss.zeta1 = std::exp(hp.uniform(std::log(base.search.zeta1_min),
                                                 std::log(base.search.zeta1_max)));
            cfg.loss.zeta2 = std::exp(hp.uniform(std::log(base.search.zeta2_min),
                                                 std::log(base.search.zeta2_max)));
            cfg.loss.gamma =
                hp.uniform(base.search.gamma_min, base.search.gamma_max);

            const std::string run_id = "ood" +
                                       detail::join_classes(trial.ood_classes, '_') +
                                       "-trial" + std::to_string(trial.trial) +
                                       "-run" + std::to_string(r);
            ++trial.runs_attempted;
            RunManifest manifest;
            try {
                TrainOptions opts;
                opts.run_id = run_id;
                opts.validation_fraction = base.search.validation_fraction;
                opts.quiet = true;
                TrainOutput run = train_run(cfg, opts);
                manifest = std::move(run.manifest);
                if (!quiet)
                    std::cout << run_id << " val auroc " << manifest.validation_auroc
                              << "\n";
                if (manifest.validation_auroc > best_val) {
                    best_val = manifest.validation_auroc;
                    trial.best_run_id = run_id;
                    trial.best_validation_auroc = manifest.validation_auroc;
                    trial.best_test_metrics = manifest.metrics;
                }
            } catch (const Error& e) {
                manifest.run_id = run_id;
                manifest.arm = cfg.arm;
                manifest.seed = run_seed;
                manifest.content_hash = content_hash(cfg, run_seed);
                manifest.config_snapshot = config_to_json(cfg);
                manifest.status = "failed";
                manifest.error = e.what();
                if (!quiet) std::cout << run_id << " failed: " << e.what() << "\n";
            }
            if (!out_dir.empty())
                save_manifest(out_dir + "/runs/" + run_id + ".json", manifest);
            result.run_manifests.push_back(std::move(manifest));
        }
        trial.failed = trial.best_run_id.empty();
    }

    if (!out_dir.empty()) {
        json summary;
        summary["trials"] = json::array();
        for (const SearchTrial& t : result.trials) {
            json jt;
            jt["ood_classes"] = t.ood_classes;
            jt["trial"] = t.trial;
            jt["failed"] = t.failed;
            jt["runs_attempted"] = t.runs_attempted;
            jt["best_run_id"] = t.best_run_id;
            if (std::isnan(t.best_validation_auroc))
                jt["best_validation_auroc"] = nullptr;
            else
                jt["best_validation_auroc"] = t.best_validation_auroc;
            summary["trials"].push_back(std::move(jt));
        }
        auto os = open_output(out_dir + "/search.json");
        os << summary.dump(2) << '\n';
    }
    return result;
}

struct ReportLine {
    std::string method;
    std::size_t runs = 0;
    Aggregate auroc;
    Aggregate aupr;
    Aggregate id_accuracy;
};

// Per-method aggregation, method = "<arm>-<detector>".
inline std::vector<ReportLine> build_report(const std::vector<RunManifest>& manifests) {
    if (manifests.empty()) throw ContractError("report: no manifests");
    std::map<std::string, std::array<std::vector<double>, 3>> buckets;
    for (const RunManifest& m : manifests) {
        if (m.status != "ok") continue;
        for (const LabeledMetricsRow& row : m.metrics) {
            auto& b = buckets[m.arm + "-" + row.detector];
            b[0].push_back(row.metrics.auroc);
            b[1].push_back(row.metrics.aupr);
            b[2].push_back(row.metrics.id_accuracy);
        }
    }
    if (buckets.empty())
        throw ContractError("report: no successful runs to aggregate");
    std::vector<ReportLine> lines;
    for (const auto& [method, b] : buckets) {
        ReportLine line;
        line.method = method;
        line.runs = b[0].size();
        line.auroc = aggregate(b[0]);
        line.aupr = aggregate(b[1]);
        line.id_accuracy = aggregate(b[2]);
        lines.push_back(std::move(line));
    }
    return lines;
}

inline constexpr const char* kReportCsvHeader =
    "method,runs,auroc_mean,auroc_std,aupr_mean,aupr_std,id_accuracy_mean,"
    "id_accuracy_std";

inline void write_report_csv(const std::string& path,
                             const std::vector<ReportLine>& lines) {
    auto os = open_output(path);
    os << kReportCsvHeader << '\n';
    for (const ReportLine& l : lines) {
        os << l.method << ',' << l.runs << ',' << format_double(l.auroc.mean) << ','
           << format_double(l.auroc.stddev) << ',' << format_double(l.aupr.mean)
           << ',' << format_double(l.aupr.stddev) << ','
           << format_double(l.id_accuracy.mean) << ','
           << format_double(l.id_accuracy.stddev) << '\n';
    }
    if (!os) throw FormatError("report: write to '" + path + "' failed");
}

inline std::vector<ReportLine> read_report_csv(const std::string& path) {
    auto is = open_input(path);
    std::string line;
    if (!std::getline(is, line) || line != kReportCsvHeader)
        throw FormatError("report '" + path + "': unexpected header");
    std::vector<ReportLine> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t pos = 0;
        while (true) {
            const std::size_t comma = line.find(',', pos);
            cells.push_back(line.substr(pos, comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (cells.size() != 8)
            throw FormatError("report '" + path + "': malformed row '" + line + "'");
        ReportLine l;
        l.method = cells[0];
        l.runs = std::stoul(cells[1]);
        l.auroc.mean = std::stod(cells[2]);
        l.auroc.stddev = std::stod(cells[3]);
        l.aupr.mean = std::stod(cells[4]);
        l.aupr.stddev = std::stod(cells[5]);
        l.id_accuracy.mean = std::stod(cells[6]);
        l.id_accuracy.stddev = std::stod(cells[7]);
        out.push_back(std::move(l));
    }
    return out;
}

// Fixed-width text table; the best mean per metric column is marked '*'.
inline std::string render_report_text(const std::vector<ReportLine>& lines) {
    if (lines.empty()) throw ContractError("report: no lines to render");
    double best_auroc = -1.0, best_aupr = -1.0, best_acc = -1.0;
    for (const ReportLine& l : lines) {
        best_auroc = std::max(best_auroc, l.auroc.mean);
        best_aupr = std::max(best_aupr, l.aupr.mean);
        best_acc = std::max(best_acc, l.id_accuracy.mean);
    }
    std::size_t method_w = 6;
    for (const ReportLine& l : lines) method_w = std::max(method_w, l.method.size());

    const auto cell = [](double mean, double std, bool best) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%6.2f +- %-5.2f%s", 100.0 * mean,
                      100.0 * std, best ? " *" : "  ");
        return std::string(buf);
    };
    std::string out;
    out += "method";
    out.append(method_w - 6, ' ');
    out += "  runs  auroc              aupr               id_accuracy\n";
    for (const ReportLine& l : lines) {
        out += l.method;
        out.append(method_w - l.method.size(), ' ');
        char runs[16];
        std::snprintf(runs, sizeof(runs), "  %4zu  ", l.runs);
        out += runs;
        out += cell(l.auroc.mean, l.auroc.stddev, l.auroc.mean == best_auroc);
        out += ' ';
        out += cell(l.aupr.mean, l.aupr.stddev, l.aupr.mean == best_aupr);
        out += ' ';
        out += cell(l.id_accuracy.mean, l.id_accuracy.stddev,
                    l.id_accuracy.mean == best_acc);
        out += '\n';
    }
    return out;
}

} // namespace osdg
