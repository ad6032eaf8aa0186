// rffi: simulate / train / evaluate / spectra / ingest / experiment

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "rffi/byteio.hpp"
#include "rffi/error.hpp"
#include "rffi/harness.hpp"
#include "rffi/parallel.hpp"

namespace fs = std::filesystem;
using namespace rffi;

namespace {

ExperimentConfig config_or_default(const std::string& path) {
    return path.empty() ? ExperimentConfig{} : load_experiment_config(path);
}

std::vector<FeatureKind> parse_kinds(const std::vector<std::string>& names) {
    std::vector<FeatureKind> out;
    for (const auto& n : names) out.push_back(parse_feature_kind(n));
    return out;
}

std::string out_file(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

int cmd_simulate(const std::string& config, std::uint64_t seed, const std::string& out,
                 const std::vector<std::string>& features, bool emit_iq) {
    ExperimentConfig cfg = config_or_default(config);
    cfg.seed = seed;
    if (!features.empty()) cfg.features = parse_kinds(features);
    cfg.validate();
    fs::create_directories(out);
    const SimulatedData data = simulate(cfg);
    write_feature_dataset(out_file(out, "train.rffi"), data.train);
    for (const auto& [name, ds] : data.tests) write_feature_dataset(out_file(out, "test_" + name + ".rffi"), ds);
    byteio::write_file(out_file(out, "config.json"), to_json(cfg).dump(2) + "\n");
    if (emit_iq) {
        export_external(out_file(out, "iq_train"), synthesize_streams(cfg, "train"));
        for (const auto& t : cfg.tests) export_external(out_file(out, "iq_" + t.name), synthesize_streams(cfg, t.name));
    }
    std::printf("simulated %zu train records, %zu test splits, %zu detection failures\n", data.train.records.size(),
                data.tests.size(), data.detection_failures);
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& feature, std::uint64_t seed, const std::string& config,
              const std::string& out) {
    const ExperimentConfig cfg = config_or_default(config);
    const FeatureDataset ds = read_feature_dataset(data_path);
    const FeatureKind kind = parse_feature_kind(feature);
    fs::create_directories(out);
    const TrainedClassifier tc = train_classifier(ds, kind, cfg.model, cfg.train, seed);
    save_checkpoint(out_file(out, "model_" + to_string(kind) + ".ckpt"), tc.model);
    int antennas = 0;
    for (const auto& r : ds.records) antennas = std::max(antennas, r.antenna + 1);
    byteio::write_file(out_file(out, "cfo_db.json"), cfo_database_from(ds, kind, antennas).to_json() + "\n");
    byteio::write_file(out_file(out, "train_log_" + to_string(kind) + ".csv"), train_log_csv(tc.result));
    const auto& best = tc.result.history.at(static_cast<std::size_t>(tc.result.best_epoch));
    std::printf("trained %s: %zu epochs, best epoch %d, val accuracy %.4f\n", to_string(kind).c_str(),
                tc.result.history.size(), best.epoch, best.val_accuracy);
    return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& db_path, const std::vector<std::string>& tests,
                 const std::string& feature, const std::vector<std::string>& mode_names, const std::string& config,
                 const std::string& out) {
    const ExperimentConfig cfg = config_or_default(config);
    const Model model = load_checkpoint(model_path);
    const CfoDatabase db = CfoDatabase::from_json(byteio::read_file(db_path));
    const FeatureKind kind = parse_feature_kind(feature);
    std::vector<FusionMode> modes = cfg.modes;
    if (!mode_names.empty()) {
        modes.clear();
        for (const auto& m : mode_names) modes.push_back(parse_fusion_mode(m));
    }

    MetricsReport report;
    std::vector<std::pair<std::string, std::vector<DecisionLogRow>>> logs;
    std::set<std::string> seen;
    for (const auto& path : tests) {
        const FeatureDataset ds = read_feature_dataset(path);
        const std::string name = ds.provenance.value("split", fs::path(path).stem().string());
        if (!seen.insert(name).second) throw InvalidArgument("test split '" + name + "' given twice");
        if (report.config_hash.empty()) {
            report.config_hash = ds.provenance.value("config_hash", std::string());
            report.seed = ds.provenance.value("seed", std::uint64_t{0});
            report.device_ids = ds.device_ids;
        }
        Evaluation ev = evaluate_scenario(model, kind, db, ds, name, modes, cfg.fusion);
        for (auto& m : ev.metrics) {
            std::printf("%-5s %-8s %-17s accuracy %.4f\n", m.feature.c_str(), m.scenario.c_str(), m.mode.c_str(),
                        m.accuracy);
            report.entries.push_back(std::move(m));
        }
        logs.emplace_back(to_string(kind) + "_" + name, std::move(ev.decisions));
    }
    write_report(out, report, logs);
    return 0;
}

int cmd_ingest(const std::string& in, const std::string& out, const std::vector<std::string>& features,
               int num_devices) {
    const auto frames = ingest_external(in);
    std::vector<ComplexFrame> streams;
    int max_label = -1;
    for (const auto& f : frames) {
        streams.push_back(f.frame);
        max_label = std::max(max_label, static_cast<int>(f.device_label));
    }
    const auto kinds = parse_kinds(features);
    const auto processed = extract_frames_parallel(streams, kinds, {});
    FeatureDataset ds;
    ds.num_devices = num_devices > 0 ? num_devices : max_label + 1;
    ds.provenance = {{"split", fs::path(in).filename().string()}, {"source", "external"}};
    std::size_t missed = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (!processed[i].detected) {
            ++missed;
            continue;
        }
        for (std::size_t k = 0; k < kinds.size(); ++k) {
            FeatureRecord r;
            r.device_label = frames[i].device_label;
            r.antenna = frames[i].antenna;
            r.kind = kinds[k];
            r.values = processed[i].features[k];
            r.cfo_hz = static_cast<float>(processed[i].estimated_cfo_hz);
            r.frame_id = frames[i].frame_id;
            ds.records.push_back(std::move(r));
        }
    }
    write_feature_dataset(out, ds);
    std::printf("ingested %zu frames (%zu without a detected packet)\n", frames.size(), missed);
    return 0;
}

int cmd_experiment(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed) {
    ExperimentConfig cfg = config_or_default(config);
    if (seed) cfg.seed = *seed;
    cfg.output_dir = out;
    const MetricsReport report = run_experiment(cfg);
    for (const auto& m : report.entries)
        std::printf("%-5s %-8s %-17s accuracy %.4f\n", m.feature.c_str(), m.scenario.c_str(), m.mode.c_str(),
                    m.accuracy);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RF fingerprint identification with spectral regrowth and CFO-assisted fusion"};
    app.require_subcommand(1);

    std::string config, out, data, feature = "sr", model, cfo_db, in;
    std::uint64_t seed = 0;
    std::vector<std::string> features, tests, modes;
    bool emit_iq = false;
    int num_devices = 0;

    auto* sim = app.add_subcommand("simulate", "synthesize train/test feature datasets");
    sim->add_option("--config", config, "experiment config JSON")->check(CLI::ExistingFile);
    sim->add_option("--seed", seed, "experiment seed")->required();
    sim->add_option("--out", out, "output directory")->required();
    sim->add_option("--features", features, "feature kinds (sr, as, dolos, eq, ud)");
    sim->add_flag("--emit-iq", emit_iq, "also write the received streams as external IQ directories");

    auto* tr = app.add_subcommand("train", "train a classifier on a feature dataset");
    tr->add_option("--data", data, "training dataset (.rffi)")->required()->check(CLI::ExistingFile);
    tr->add_option("--feature", feature, "feature kind");
    tr->add_option("--seed", seed, "training seed")->required();
    tr->add_option("--config", config, "experiment config JSON (model/train sections)")->check(CLI::ExistingFile);
    tr->add_option("--out", out, "output directory")->required();

    auto* ev = app.add_subcommand("evaluate", "score test datasets under each fusion mode");
    ev->add_option("--model", model, "checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--cfo-db", cfo_db, "CFO database JSON")->required()->check(CLI::ExistingFile);
    ev->add_option("--test", tests, "test datasets (.rffi)")->required()->check(CLI::ExistingFile);
    ev->add_option("--feature", feature, "feature kind the model was trained on");
    ev->add_option("--modes", modes, "fusion modes (direct, df, hybrid, zeroing, zeroing_improved)");
    ev->add_option("--config", config, "experiment config JSON (fusion settings)")->check(CLI::ExistingFile);
    ev->add_option("--out", out, "output directory")->required();

    auto* sp = app.add_subcommand("spectra", "write stf/ltf spectra of the PA setups");
    sp->add_option("--out", out, "output directory")->required();

    auto* ing = app.add_subcommand("ingest", "convert an external IQ directory into a feature dataset");
    ing->add_option("--in", in, "IQ directory with manifest.json")->required()->check(CLI::ExistingDirectory);
    ing->add_option("--out", out, "output dataset file")->required();
    ing->add_option("--features", features, "feature kinds (default: sr as)");
    ing->add_option("--num-devices", num_devices, "class count (default: largest label + 1)");

    auto* ex = app.add_subcommand("experiment", "simulate, train and evaluate in one run");
    ex->add_option("--config", config, "experiment config JSON")->check(CLI::ExistingFile);
    ex->add_option("--seed", seed, "override the config seed");
    ex->add_option("--out", out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) return cmd_simulate(config, seed, out, features, emit_iq);
        if (*tr) return cmd_train(data, feature, seed, config, out);
        if (*ev) return cmd_evaluate(model, cfo_db, tests, feature, modes, config, out);
        if (*sp) {
            dump_spectra(out);
            return 0;
        }
        if (*ing) return cmd_ingest(in, out, features.empty() ? std::vector<std::string>{"sr", "as"} : features, num_devices);
        if (*ex) {
            std::optional<std::uint64_t> s;
            if (ex->count("--seed")) s = seed;
            return cmd_experiment(config, out, s);
        }
    } catch (const rffi::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
