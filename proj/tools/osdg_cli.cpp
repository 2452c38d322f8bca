#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "osdg/osdg.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const std::size_t comma = s.find(',', pos);
        const std::string item = s.substr(pos, comma - pos);
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

struct CommonFlags {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string detectors;
    std::string arm;

    void attach(CLI::App* cmd, bool config_required = true) {
        auto* c = cmd->add_option("--config", config_path, "experiment config JSON");
        if (config_required) c->required();
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed, "override train.seed")
            ->each([this](const std::string&) { seed_set = true; });
        cmd->add_option("--detectors", detectors,
                        "comma-separated detector list, e.g. energy,msp,ddu");
        cmd->add_option("--arm", arm, "training arm: erm or fsi");
    }

    osdg::ExperimentConfig load() const {
        osdg::ExperimentConfig cfg = osdg::load_experiment_config(config_path);
        if (seed_set) cfg.train.seed = seed;
        if (!detectors.empty()) cfg.detectors = split_csv(detectors);
        if (!arm.empty()) cfg.arm = arm;
        cfg.validate();
        return cfg;
    }
};

int cmd_prepare_data(const CommonFlags& flags) {
    const osdg::ExperimentConfig cfg = flags.load();
    std::filesystem::create_directories(flags.out_dir);
    const osdg::Split split =
        osdg::make_split(osdg::make_raw_digits(cfg), cfg.split_spec());
    osdg::write_dataset(flags.out_dir + "/train.bin", split.train);
    osdg::write_dataset(flags.out_dir + "/test.bin", split.test);

    const auto gen = osdg::make_generator(cfg);
    osdg::RngStream rng(osdg::derive_seed(cfg.train.seed, osdg::stream::kSynth));
    std::vector<osdg::ColoredSample> preview;
    for (int i = 0; i < 64; ++i) {
        const std::size_t a = rng.uniform_index(split.train.size());
        std::size_t b = a;
        while (split.train[b].label == split.train[a].label)
            b = rng.uniform_index(split.train.size());
        osdg::ColoredSample s;
        s.image = gen->synth_ood(split.train[a].image, split.train[a].label,
                                 split.train[b].image, split.train[b].label, rng,
                                 cfg.blend);
        s.label = osdg::kOodLabel;
        s.domain_id = -1;
        preview.push_back(std::move(s));
    }
    osdg::write_dataset(flags.out_dir + "/blend_preview.bin", preview);
    std::cout << "wrote " << split.train.size() << " train / " << split.test.size()
              << " test samples and a 64-image blend preview to " << flags.out_dir
              << "\n";
    return 0;
}

int cmd_train_g(const CommonFlags& flags, const osdg::TrainGeneratorConfig& gen_cfg) {
    osdg::ExperimentConfig cfg = flags.load();
    std::filesystem::create_directories(flags.out_dir);
    const osdg::Split split =
        osdg::make_split(osdg::make_raw_digits(cfg), cfg.split_spec());

    osdg::LearnedGenerator::Dims dims;
    dims.semantic_dim = cfg.generator.semantic_dim;
    dims.variation_dim = cfg.generator.variation_dim;
    dims.hidden_dim = cfg.generator.hidden_dim;
    osdg::RngStream init(osdg::derive_seed(cfg.train.seed, osdg::stream::kInit));
    osdg::LearnedGenerator gen(dims, init);

    osdg::TrainGeneratorConfig tc = gen_cfg;
    tc.seed = cfg.train.seed;
    const std::vector<double> losses = osdg::train_generator(gen, split.train, tc);
    for (std::size_t e = 0; e < losses.size(); ++e)
        std::cout << "generator epoch " << e + 1 << "/" << losses.size() << " loss "
                  << losses[e] << "\n";
    const std::string path = flags.out_dir + "/generator.bin";
    gen.save(path);
    std::cout << "saved generator to " << path << "\n";
    return 0;
}

int cmd_train(const CommonFlags& flags) {
    const osdg::ExperimentConfig cfg = flags.load();
    osdg::TrainOptions opts;
    opts.run_id = "train-" + cfg.arm + "-seed" + std::to_string(cfg.train.seed);
    opts.out_dir = flags.out_dir;
    const osdg::TrainOutput out = osdg::train_run(cfg, opts);
    std::cout << osdg::render_report_text(osdg::build_report({out.manifest}));
    return 0;
}

int cmd_evaluate(const CommonFlags& flags, std::string checkpoint) {
    const osdg::ExperimentConfig cfg = flags.load();
    if (checkpoint.empty()) checkpoint = flags.out_dir + "/checkpoint.bin";
    const std::string run_id = "evaluate-seed" + std::to_string(cfg.train.seed);
    const std::vector<osdg::LabeledMetricsRow> rows =
        osdg::evaluate_checkpoint(cfg, checkpoint, run_id);
    std::filesystem::create_directories(flags.out_dir);
    osdg::write_metrics_csv(flags.out_dir + "/metrics.csv", rows);
    for (const osdg::LabeledMetricsRow& r : rows)
        std::cout << r.detector << ": auroc " << r.metrics.auroc << ", aupr "
                  << r.metrics.aupr << ", id_accuracy " << r.metrics.id_accuracy
                  << "\n";
    return 0;
}

int cmd_search(const CommonFlags& flags) {
    const osdg::ExperimentConfig cfg = flags.load();
    const osdg::SearchResult result =
        osdg::random_search(cfg, flags.out_dir, /*quiet=*/false);

    std::vector<osdg::RunManifest> best;
    for (const osdg::SearchTrial& t : result.trials) {
        if (t.failed) {
            std::cout << "trial " << t.trial << " on ood classes "
                      << osdg::ood_classes_field(t.ood_classes) << " FAILED\n";
            continue;
        }
        for (const osdg::RunManifest& m : result.run_manifests)
            if (m.run_id == t.best_run_id) best.push_back(m);
    }
    if (!best.empty()) {
        const auto lines = osdg::build_report(best);
        osdg::write_report_csv(flags.out_dir + "/report.csv", lines);
        const std::string text = osdg::render_report_text(lines);
        auto os = osdg::open_output(flags.out_dir + "/report.txt");
        os << text;
        std::cout << text;
    }
    return 0;
}

int cmd_report(const std::vector<std::string>& manifest_paths,
               const std::string& out_dir) {
    std::vector<osdg::RunManifest> manifests;
    for (const std::string& p : manifest_paths)
        manifests.push_back(osdg::load_manifest(p));
    const auto lines = osdg::build_report(manifests);
    std::filesystem::create_directories(out_dir);
    osdg::write_report_csv(out_dir + "/report.csv", lines);
    const std::string text = osdg::render_report_text(lines);
    auto os = osdg::open_output(out_dir + "/report.txt");
    os << text;
    std::cout << text;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"feature-space semantic invariance: training and evaluation"};
    app.require_subcommand(1);

    CommonFlags prep_flags, gen_flags, train_flags, eval_flags, search_flags;
    osdg::TrainGeneratorConfig gen_train;
    std::string eval_checkpoint;
    std::vector<std::string> report_manifests;
    std::string report_out = "out";

    prep_flags.attach(app.add_subcommand("prepare-data",
                                         "write split + blend preview binaries"));

    auto* train_g = app.add_subcommand("train-g", "train the learned generator");
    gen_flags.attach(train_g);
    train_g->add_option("--epochs", gen_train.epochs, "generator epochs");
    train_g->add_option("--batch-size", gen_train.batch_size, "generator batch size");
    train_g->add_option("--lr", gen_train.lr, "generator learning rate");

    train_flags.attach(app.add_subcommand("train", "train one run and evaluate it"));

    auto* evaluate = app.add_subcommand("evaluate", "evaluate a saved checkpoint");
    eval_flags.attach(evaluate);
    evaluate->add_option("--checkpoint", eval_checkpoint,
                         "checkpoint path (default <out>/checkpoint.bin)");

    search_flags.attach(app.add_subcommand(
        "search", "random hyperparameter search over ood selections and trials"));

    auto* report = app.add_subcommand("report", "aggregate manifests into a table");
    report->add_option("manifests", report_manifests, "manifest JSON paths")
        ->required();
    report->add_option("--out", report_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("prepare-data")) return cmd_prepare_data(prep_flags);
        if (app.got_subcommand("train-g")) return cmd_train_g(gen_flags, gen_train);
        if (app.got_subcommand("train")) return cmd_train(train_flags);
        if (app.got_subcommand("evaluate"))
            return cmd_evaluate(eval_flags, eval_checkpoint);
        if (app.got_subcommand("search")) return cmd_search(search_flags);
        if (app.got_subcommand("report"))
            return cmd_report(report_manifests, report_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
