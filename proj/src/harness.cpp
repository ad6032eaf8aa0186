#include "rffi/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "rffi/byteio.hpp"
#include "rffi/dsp.hpp"
#include "rffi/error.hpp"
#include "rffi/parallel.hpp"
#include "rffi/preamble.hpp"

namespace rffi {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

enum SeedTag : std::uint64_t {
    kTagCfo = 0xcf0,
    kTagTrainChannel = 0x7c01,
    kTagTestChannel = 0x7e57,
    kTagPerturb = 0x9e27,
    kTagLead = 0x1ead,
    kTagModel = 0x30de1,
    kTagShuffle = 0x5f1e,
    kTagNominal = 0x0c0f,
    kTagKernel = 0x4e2e,
};

constexpr int kDriftSessionBase = 1000;

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw InvalidArgument(where + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw InvalidArgument("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

bool filename_safe(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; });
}

std::string device_name(int d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "dev%02d", d);
    return buf;
}

struct SplitPlan {
    std::vector<DeviceProfile> profiles;
    std::vector<FrameJob> jobs;
    std::set<std::uint64_t> channel_seeds;
};

// split = -1 for train, else the test scenario index.
SplitPlan plan_split(const ExperimentConfig& cfg, const std::vector<DeviceProfile>& population, int split) {
    const ScenarioConfig& sc = cfg.scenario;
    SplitPlan plan;
    plan.profiles = population;
    const bool train = split < 0;
    const TestScenario* test = train ? nullptr : &cfg.tests.at(static_cast<std::size_t>(split));
    if (test && test->drift)
        for (auto& p : plan.profiles) p.cfo_session_jitter_hz = sc.drift_session_jitter_hz;

    const int frames = train ? sc.train_frames : sc.test_frames;
    const std::uint64_t cfo_seed = derive_seed(cfg.seed, kTagCfo);
    const auto lead_span = static_cast<std::uint64_t>(sc.lead_max - sc.lead_min);
    const auto split_tag = static_cast<std::uint64_t>(split + 1);
    plan.jobs.reserve(static_cast<std::size_t>(sc.num_devices) * static_cast<std::size_t>(frames) *
                      static_cast<std::size_t>(sc.num_antennas));

    std::vector<ChannelRealization> static_base;
    if (test && !test->dynamic) {
        for (int d = 0; d < sc.num_devices; ++d)
            for (int a = 0; a < sc.num_antennas; ++a) {
                const auto s = derive_seed(cfg.seed, kTagTestChannel, split, d, a);
                plan.channel_seeds.insert(s);
                static_base.push_back(make_channel(test->channel, s, sc.channel));
            }
    }

    for (int d = 0; d < sc.num_devices; ++d) {
        for (int f = 0; f < frames; ++f) {
            for (int a = 0; a < sc.num_antennas; ++a) {
                FrameJob job;
                job.profile = &plan.profiles[static_cast<std::size_t>(d)];
                job.snr_db = sc.snr_db;
                job.frame_index = f;
                job.seed = cfo_seed;
                job.antenna = a;
                job.label = d;
                job.frame_id = static_cast<std::uint32_t>(d * frames + f);
                job.layout.lead = static_cast<std::size_t>(sc.lead_min) +
                                  static_cast<std::size_t>(derive_seed(cfg.seed, kTagLead, split_tag, d, f, a) % lead_span);
                job.layout.tail = static_cast<std::size_t>(sc.tail);
                job.layout.drive_gain = sc.drive_gain;
                if (train) {
                    job.session_index = f % sc.train_sessions;
                    const auto s = derive_seed(cfg.seed, kTagTrainChannel, d, f, a);
                    plan.channel_seeds.insert(s);
                    job.channel = make_channel(ChannelKind::NlosRayleigh, s, sc.channel);
                } else {
                    job.session_index = test->drift ? kDriftSessionBase + split : sc.train_sessions + split;
                    if (test->dynamic) {
                        const auto s = derive_seed(cfg.seed, kTagTestChannel, split, d, f, a);
                        plan.channel_seeds.insert(s);
                        job.channel = make_channel(test->channel, s, sc.channel);
                    } else {
                        job.channel = perturb_channel(
                            static_base[static_cast<std::size_t>(d * sc.num_antennas + a)],
                            derive_seed(cfg.seed, kTagPerturb, split, d, f, a), sc.channel.static_phase_jitter_deg);
                    }
                }
                plan.jobs.push_back(std::move(job));
            }
        }
    }
    return plan;
}

FeatureDataset to_dataset(const ExperimentConfig& cfg, const std::vector<DeviceProfile>& population,
                          const std::vector<ProcessedFrame>& frames, const std::string& split,
                          std::size_t& failures) {
    FeatureDataset ds;
    ds.num_devices = cfg.scenario.num_devices;
    for (const auto& p : population) ds.device_ids.push_back(p.device_id);
    ds.provenance = {{"split", split}, {"seed", cfg.seed}, {"config_hash", config_hash(cfg)}};
    for (const auto& fr : frames) {
        if (!fr.detected) {
            ++failures;
            continue;
        }
        for (std::size_t k = 0; k < cfg.features.size(); ++k) {
            FeatureRecord r;
            r.device_label = static_cast<std::uint16_t>(fr.label);
            r.antenna = static_cast<std::uint8_t>(fr.antenna);
            r.kind = cfg.features[k];
            r.values = fr.features[k];
            r.cfo_hz = static_cast<float>(fr.estimated_cfo_hz);
            r.frame_id = fr.frame_id;
            ds.records.push_back(std::move(r));
        }
    }
    return ds;
}

ojson train_to_json(const TrainConfig& t) {
    return {{"lr0", t.lr0},
            {"weight_decay", t.weight_decay},
            {"lr_decay_per_epoch", t.lr_decay_per_epoch},
            {"batch_size", t.batch_size},
            {"epochs", t.epochs},
            {"patience", t.patience},
            {"validation_fraction", t.validation_fraction}};
}

ojson metrics_to_json(const ModeMetrics& m) {
    return {{"feature", m.feature},
            {"scenario", m.scenario},
            {"mode", m.mode},
            {"total", m.total},
            {"correct", m.correct},
            {"accuracy", m.accuracy},
            {"device_totals", m.device_totals},
            {"rejected", m.rejected},
            {"per_device_accuracy", m.per_device_accuracy},
            {"confusion", m.confusion}};
}

ModeMetrics summarize(const std::string& feature, const std::string& scenario, FusionMode mode, int classes,
                      const std::vector<int>& truths, const std::vector<std::optional<int>>& preds) {
    ModeMetrics m;
    m.feature = feature;
    m.scenario = scenario;
    m.mode = to_string(mode);
    m.total = truths.size();
    m.rejected.assign(static_cast<std::size_t>(classes), 0);
    m.device_totals.assign(static_cast<std::size_t>(classes), 0);
    std::vector<int> kept_pred, kept_truth;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        ++m.device_totals[static_cast<std::size_t>(truths[i])];
        if (preds[i]) {
            kept_pred.push_back(*preds[i]);
            kept_truth.push_back(truths[i]);
        } else {
            ++m.rejected[static_cast<std::size_t>(truths[i])];
        }
    }
    m.confusion = kept_pred.empty()
                      ? std::vector<std::vector<int>>(static_cast<std::size_t>(classes),
                                                      std::vector<int>(static_cast<std::size_t>(classes), 0))
                      : confusion_matrix(kept_pred, kept_truth, classes);
    for (int c = 0; c < classes; ++c) m.correct += static_cast<std::size_t>(m.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)]);
    m.accuracy = m.total ? static_cast<double>(m.correct) / static_cast<double>(m.total) : 0.0;
    for (int c = 0; c < classes; ++c) {
        const int tot = m.device_totals[static_cast<std::size_t>(c)];
        m.per_device_accuracy.push_back(
            tot ? static_cast<double>(m.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)]) / tot : 0.0);
    }
    return m;
}

}  // namespace

// ---------------------------------------------------------------- configs

void ScenarioConfig::validate() const {
    if (num_devices < 2 || num_devices > 0xffff) throw InvalidArgument("num_devices must lie in [2, 65535]");
    if (num_antennas < 1 || num_antennas > 255) throw InvalidArgument("num_antennas must lie in [1, 255]");
    if (kernel_dimension < 1 || kernel_dimension > 5) throw InvalidArgument("kernel_dimension must lie in [1, 5]");
    if (kernel_memory < 1) throw InvalidArgument("kernel_memory must be positive");
    if (nominal_cfo_span_hz < 0.0 || nominal_cfo_span_hz > kMaxNominalCfoHz)
        throw InvalidArgument("nominal_cfo_span_hz out of range");
    if (session_jitter_hz < 0.0 || frame_jitter_hz < 0.0 || drift_session_jitter_hz < 0.0)
        throw InvalidArgument("CFO jitters must be non-negative");
    if (!(drive_gain > 0.0)) throw InvalidArgument("drive_gain must be positive");
    if (channel.num_taps < 1 || channel.num_taps > 16) throw InvalidArgument("channel num_taps must lie in [1, 16]");
    if (!(channel.decay_samples > 0.0)) throw InvalidArgument("channel decay_samples must be positive");
    if (train_frames < 1 || test_frames < 1) throw InvalidArgument("frame counts must be positive");
    if (train_sessions < 1) throw InvalidArgument("train_sessions must be positive");
    if (lead_min < 0 || lead_max <= lead_min) throw InvalidArgument("need 0 <= lead_min < lead_max");
    if (tail < 0) throw InvalidArgument("tail must be non-negative");
}

std::vector<TestScenario> default_test_scenarios() {
    return {{"L1", ChannelKind::LosRician, false, false},
            {"L2", ChannelKind::LosRician, false, false},
            {"L3", ChannelKind::NlosRayleigh, false, false},
            {"M", ChannelKind::NlosRayleigh, true, false},
            {"drift", ChannelKind::NlosRayleigh, true, true}};
}

void ExperimentConfig::validate() const {
    scenario.validate();
    if (features.empty()) throw InvalidArgument("no feature kinds requested");
    if (modes.empty()) throw InvalidArgument("no fusion modes requested");
    if (tests.empty()) throw InvalidArgument("no test scenarios");
    std::set<std::string> names;
    for (const auto& t : tests) {
        if (!filename_safe(t.name) || t.name == "train")
            throw InvalidArgument("test scenario name '" + t.name + "' must be [A-Za-z0-9_-]+ and not 'train'");
        if (!names.insert(t.name).second) throw InvalidArgument("duplicate test scenario '" + t.name + "'");
    }
    if (!(fusion.zeroing_threshold_hz >= 0.0)) throw InvalidArgument("zeroing threshold must be non-negative");
    if (!(fusion.weight_floor_hz > 0.0)) throw InvalidArgument("weight floor must be positive");
}

nlohmann::ordered_json to_json(const ScenarioConfig& c) {
    return {{"num_devices", c.num_devices},
            {"num_antennas", c.num_antennas},
            {"kernel_bank", c.kernel_bank},
            {"kernel_dimension", c.kernel_dimension},
            {"kernel_memory", c.kernel_memory},
            {"kernel_scales",
             {{"memory_taps", c.kernel_scales.memory_taps},
              {"order2", c.kernel_scales.order2},
              {"order3", c.kernel_scales.order3}}},
            {"population_seed", c.population_seed},
            {"nominal_cfo_span_hz", c.nominal_cfo_span_hz},
            {"session_jitter_hz", c.session_jitter_hz},
            {"frame_jitter_hz", c.frame_jitter_hz},
            {"drift_session_jitter_hz", c.drift_session_jitter_hz},
            {"snr_db", c.snr_db},
            {"drive_gain", c.drive_gain},
            {"channel",
             {{"num_taps", c.channel.num_taps},
              {"decay_samples", c.channel.decay_samples},
              {"rician_k_db", c.channel.rician_k_db},
              {"static_phase_jitter_deg", c.channel.static_phase_jitter_deg}}},
            {"train_frames", c.train_frames},
            {"test_frames", c.test_frames},
            {"train_sessions", c.train_sessions},
            {"lead_min", c.lead_min},
            {"lead_max", c.lead_max},
            {"tail", c.tail}};
}

ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    ScenarioConfig c;
    try {
        check_keys(j,
                   {"num_devices", "num_antennas", "kernel_bank", "kernel_dimension", "kernel_memory", "kernel_scales",
                    "population_seed", "nominal_cfo_span_hz", "session_jitter_hz", "frame_jitter_hz",
                    "drift_session_jitter_hz", "snr_db", "drive_gain", "channel", "train_frames", "test_frames",
                    "train_sessions", "lead_min", "lead_max", "tail"},
                   "scenario");
        read_opt(j, "num_devices", c.num_devices);
        read_opt(j, "num_antennas", c.num_antennas);
        read_opt(j, "kernel_bank", c.kernel_bank);
        read_opt(j, "kernel_dimension", c.kernel_dimension);
        read_opt(j, "kernel_memory", c.kernel_memory);
        if (j.contains("kernel_scales")) {
            const auto& k = j.at("kernel_scales");
            check_keys(k, {"memory_taps", "order2", "order3"}, "kernel_scales");
            read_opt(k, "memory_taps", c.kernel_scales.memory_taps);
            read_opt(k, "order2", c.kernel_scales.order2);
            read_opt(k, "order3", c.kernel_scales.order3);
        }
        read_opt(j, "population_seed", c.population_seed);
        read_opt(j, "nominal_cfo_span_hz", c.nominal_cfo_span_hz);
        read_opt(j, "session_jitter_hz", c.session_jitter_hz);
        read_opt(j, "frame_jitter_hz", c.frame_jitter_hz);
        read_opt(j, "drift_session_jitter_hz", c.drift_session_jitter_hz);
        read_opt(j, "snr_db", c.snr_db);
        read_opt(j, "drive_gain", c.drive_gain);
        if (j.contains("channel")) {
            const auto& ch = j.at("channel");
            check_keys(ch, {"num_taps", "decay_samples", "rician_k_db", "static_phase_jitter_deg"}, "channel");
            read_opt(ch, "num_taps", c.channel.num_taps);
            read_opt(ch, "decay_samples", c.channel.decay_samples);
            read_opt(ch, "rician_k_db", c.channel.rician_k_db);
            read_opt(ch, "static_phase_jitter_deg", c.channel.static_phase_jitter_deg);
        }
        read_opt(j, "train_frames", c.train_frames);
        read_opt(j, "test_frames", c.test_frames);
        read_opt(j, "train_sessions", c.train_sessions);
        read_opt(j, "lead_min", c.lead_min);
        read_opt(j, "lead_max", c.lead_max);
        read_opt(j, "tail", c.tail);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("scenario config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
    ojson features = ojson::array(), modes = ojson::array(), tests = ojson::array();
    for (auto k : c.features) features.push_back(to_string(k));
    for (auto m : c.modes) modes.push_back(to_string(m));
    for (const auto& t : c.tests)
        tests.push_back({{"name", t.name}, {"channel", to_string(t.channel)}, {"dynamic", t.dynamic}, {"drift", t.drift}});
    return {{"scenario", to_json(c.scenario)},
            {"features", features},
            {"modes", modes},
            {"tests", tests},
            {"model",
             {{"conv_channels", c.model.conv_channels},
              {"kernel_size", c.model.kernel_size},
              {"pool_size", c.model.pool_size},
              {"fc_hidden", c.model.fc_hidden}}},
            {"train", train_to_json(c.train)},
            {"log_magnitude", c.feature_options.log_magnitude},
            {"zeroing_threshold_hz", c.fusion.zeroing_threshold_hz},
            {"normalize_weights", c.fusion.normalize_weights},
            {"weight_floor_hz", c.fusion.weight_floor_hz},
            {"seed", c.seed},
            {"output_dir", c.output_dir}};
}

ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::string& base_dir) {
    ExperimentConfig c;
    try {
        check_keys(j,
                   {"scenario", "scenario_path", "features", "modes", "tests", "model", "train", "log_magnitude",
                    "zeroing_threshold_hz", "normalize_weights", "weight_floor_hz", "seed", "output_dir"},
                   "experiment config");
        if (j.contains("scenario") && j.contains("scenario_path"))
            throw InvalidArgument("give either scenario or scenario_path, not both");
        if (j.contains("scenario")) c.scenario = scenario_from_json(j.at("scenario"));
        if (j.contains("scenario_path")) {
            fs::path p = j.at("scenario_path").get<std::string>();
            if (p.is_relative()) p = fs::path(base_dir) / p;
            try {
                c.scenario = scenario_from_json(nlohmann::json::parse(byteio::read_file(p.string())));
            } catch (const nlohmann::json::exception& e) {
                throw InvalidArgument("scenario file " + p.string() + ": " + e.what());
            }
        }
        if (j.contains("features")) {
            c.features.clear();
            for (const auto& f : j.at("features")) c.features.push_back(parse_feature_kind(f.get<std::string>()));
        }
        if (j.contains("modes")) {
            c.modes.clear();
            for (const auto& m : j.at("modes")) c.modes.push_back(parse_fusion_mode(m.get<std::string>()));
        }
        if (j.contains("tests")) {
            c.tests.clear();
            for (const auto& t : j.at("tests")) {
                check_keys(t, {"name", "channel", "dynamic", "drift"}, "test scenario");
                TestScenario ts;
                ts.name = t.at("name").get<std::string>();
                ts.channel = parse_channel_kind(t.at("channel").get<std::string>());
                read_opt(t, "dynamic", ts.dynamic);
                read_opt(t, "drift", ts.drift);
                c.tests.push_back(ts);
            }
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            check_keys(m, {"conv_channels", "kernel_size", "pool_size", "fc_hidden"}, "model");
            read_opt(m, "conv_channels", c.model.conv_channels);
            read_opt(m, "kernel_size", c.model.kernel_size);
            read_opt(m, "pool_size", c.model.pool_size);
            read_opt(m, "fc_hidden", c.model.fc_hidden);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            check_keys(t,
                       {"lr0", "weight_decay", "lr_decay_per_epoch", "batch_size", "epochs", "patience",
                        "validation_fraction"},
                       "train");
            read_opt(t, "lr0", c.train.lr0);
            read_opt(t, "weight_decay", c.train.weight_decay);
            read_opt(t, "lr_decay_per_epoch", c.train.lr_decay_per_epoch);
            read_opt(t, "batch_size", c.train.batch_size);
            read_opt(t, "epochs", c.train.epochs);
            read_opt(t, "patience", c.train.patience);
            read_opt(t, "validation_fraction", c.train.validation_fraction);
        }
        read_opt(j, "log_magnitude", c.feature_options.log_magnitude);
        read_opt(j, "zeroing_threshold_hz", c.fusion.zeroing_threshold_hz);
        read_opt(j, "normalize_weights", c.fusion.normalize_weights);
        read_opt(j, "weight_floor_hz", c.fusion.weight_floor_hz);
        read_opt(j, "seed", c.seed);
        read_opt(j, "output_dir", c.output_dir);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(byteio::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("config " + path + ": " + e.what());
    }
    return experiment_from_json(j, fs::path(path).parent_path().string().empty() ? "." : fs::path(path).parent_path().string());
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
    auto j = to_json(cfg);
    j.erase("output_dir");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

// ---------------------------------------------------------------- population / data

std::vector<DeviceProfile> build_population(const ScenarioConfig& cfg) {
    cfg.validate();
    std::vector<KernelBankEntry> bank;
    if (!cfg.kernel_bank.empty()) {
        bank = load_kernel_bank(cfg.kernel_bank);
        if (static_cast<int>(bank.size()) < cfg.num_devices)
            throw InvalidArgument("kernel bank holds " + std::to_string(bank.size()) + " kernels, need " +
                                  std::to_string(cfg.num_devices));
    }
    Rng rng(derive_seed(cfg.population_seed, kTagNominal));
    std::uniform_real_distribution<double> nominal(-cfg.nominal_cfo_span_hz, cfg.nominal_cfo_span_hz);
    std::vector<DeviceProfile> out;
    for (int d = 0; d < cfg.num_devices; ++d) {
        DeviceProfile p;
        if (bank.empty()) {
            p.device_id = device_name(d);
            p.kernel = random_device_kernel(cfg.kernel_dimension, cfg.kernel_memory,
                                            derive_seed(cfg.population_seed, kTagKernel, d), cfg.kernel_scales);
        } else {
            p.device_id = bank[static_cast<std::size_t>(d)].device_id;
            p.kernel = bank[static_cast<std::size_t>(d)].kernel;
        }
        p.nominal_cfo_hz = nominal(rng);
        p.cfo_session_jitter_hz = cfg.session_jitter_hz;
        p.cfo_frame_jitter_hz = cfg.frame_jitter_hz;
        p.validate();
        out.push_back(std::move(p));
    }
    return out;
}

SimulatedData simulate(const ExperimentConfig& cfg, bool parallel) {
    cfg.validate();
    const auto population = build_population(cfg.scenario);
    SimulatedData data;
    auto run = [&](const SplitPlan& plan) {
        return parallel ? process_frames_parallel(plan.jobs, cfg.features, cfg.feature_options)
                        : process_frames_serial(plan.jobs, cfg.features, cfg.feature_options);
    };

    const SplitPlan train_plan = plan_split(cfg, population, -1);
    data.train = to_dataset(cfg, population, run(train_plan), "train", data.detection_failures);
    for (std::size_t t = 0; t < cfg.tests.size(); ++t) {
        const SplitPlan plan = plan_split(cfg, population, static_cast<int>(t));
        for (auto s : plan.channel_seeds)
            if (train_plan.channel_seeds.count(s))
                throw Error("test scenario " + cfg.tests[t].name + " reuses a training channel seed");
        data.tests.emplace_back(cfg.tests[t].name,
                                to_dataset(cfg, population, run(plan), cfg.tests[t].name, data.detection_failures));
    }
    return data;
}

std::vector<LabeledFrame> synthesize_streams(const ExperimentConfig& cfg, const std::string& split) {
    cfg.validate();
    int index = -2;
    if (split == "train") index = -1;
    for (std::size_t t = 0; t < cfg.tests.size(); ++t)
        if (cfg.tests[t].name == split) index = static_cast<int>(t);
    if (index == -2) throw InvalidArgument("unknown split '" + split + "'");
    const auto population = build_population(cfg.scenario);
    const SplitPlan plan = plan_split(cfg, population, index);
    std::vector<LabeledFrame> out(plan.jobs.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(plan.jobs.size()); ++i) {
        const FrameJob& job = plan.jobs[static_cast<std::size_t>(i)];
        auto rx = synthesize_received(*job.profile, job.channel, job.snr_db, job.session_index, job.frame_index,
                                      job.seed, job.antenna, job.layout);
        out[static_cast<std::size_t>(i)] = LabeledFrame{std::move(rx.frame), static_cast<std::uint16_t>(job.label),
                                                        static_cast<std::uint8_t>(job.antenna), job.frame_id};
    }
    return out;
}

LabeledFeatures training_set(const FeatureDataset& ds, FeatureKind kind) {
    LabeledFeatures out;
    for (const auto& r : ds.records) {
        if (r.kind != kind) continue;
        out.features.push_back(r.values);
        out.labels.push_back(r.device_label);
    }
    if (out.features.empty()) throw TrainingError("dataset holds no " + to_string(kind) + " features");
    return out;
}

CfoDatabase cfo_database_from(const FeatureDataset& train, FeatureKind kind, int num_antennas) {
    std::vector<CfoRecord> recs;
    for (const auto& r : train.records) {
        if (r.kind != kind) continue;
        recs.push_back(CfoRecord{static_cast<int>(r.device_label), r.antenna, r.cfo_hz, r.frame_id});
    }
    std::vector<std::string> ids = train.device_ids;
    if (ids.empty())
        for (int d = 0; d < train.num_devices; ++d) ids.push_back(device_name(d));
    return build_cfo_database(recs, ids, num_antennas);
}

TrainedClassifier train_classifier(const FeatureDataset& train, FeatureKind kind, ModelConfig model_cfg,
                                   TrainConfig train_cfg, std::uint64_t seed) {
    model_cfg.input_length = feature_length(kind);
    model_cfg.num_classes = train.num_devices;
    model_cfg.seed = derive_seed(seed, kTagModel, static_cast<std::uint64_t>(kind));
    train_cfg.seed = derive_seed(seed, kTagShuffle, static_cast<std::uint64_t>(kind));
    TrainedClassifier out{kind, Model(model_cfg), {}};
    out.result = rffi::train(out.model, training_set(train, kind), train_cfg);
    return out;
}

// ---------------------------------------------------------------- evaluation

std::vector<std::vector<int>> confusion_matrix(std::span<const int> predictions, std::span<const int> truths,
                                               int classes) {
    if (predictions.empty()) throw InvalidArgument("confusion matrix of an empty prediction list");
    if (predictions.size() != truths.size()) throw InvalidArgument("predictions and truths differ in length");
    if (classes < 1) throw InvalidArgument("class count must be positive");
    std::vector<std::vector<int>> m(static_cast<std::size_t>(classes), std::vector<int>(static_cast<std::size_t>(classes), 0));
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int p = predictions[i], t = truths[i];
        if (p < 0 || p >= classes || t < 0 || t >= classes)
            throw InvalidArgument("label out of range at position " + std::to_string(i));
        ++m[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    return m;
}

Evaluation evaluate_scenario(const Model& model, FeatureKind kind, const CfoDatabase& db, const FeatureDataset& test,
                             const std::string& scenario, std::span<const FusionMode> modes,
                             const FusionOptions& opts, bool parallel) {
    const int classes = test.num_devices;
    if (classes != model.config().num_classes || classes != db.num_devices())
        throw InvalidArgument("model, CFO database and test set disagree on the device count");
    const int antennas = db.num_antennas();

    struct Frame {
        int label = -1;
        std::vector<int> rec;  // record index per antenna, -1 if missing
    };
    std::map<std::uint32_t, Frame> frames;
    std::vector<std::vector<float>> feats;
    std::vector<std::size_t> rec_of_feat;
    for (std::size_t i = 0; i < test.records.size(); ++i) {
        const auto& r = test.records[i];
        if (r.kind != kind) continue;
        if (r.antenna >= antennas) throw InvalidArgument("test record antenna exceeds the CFO database");
        Frame& f = frames[r.frame_id];
        if (f.rec.empty()) f.rec.assign(static_cast<std::size_t>(antennas), -1);
        if (f.label >= 0 && f.label != r.device_label) throw FormatError("frame id shared by two devices");
        f.label = r.device_label;
        f.rec[r.antenna] = static_cast<int>(feats.size());
        feats.push_back(r.values);
        rec_of_feat.push_back(i);
    }
    if (frames.empty()) throw InvalidArgument("test set holds no " + to_string(kind) + " features");

    const auto scores = parallel ? infer_parallel(model, feats) : infer_serial(model, feats);

    Evaluation ev;
    const std::string fname = to_string(kind);
    for (FusionMode mode : modes) {
        std::vector<int> truths;
        std::vector<std::optional<int>> preds;
        for (const auto& [id, f] : frames) {
            DecisionLogRow row;
            row.frame_id = id;
            row.true_label = f.label;
            row.mode = mode;
            bool complete = true;
            FusionInput in;
            for (int a = 0; a < antennas; ++a) {
                const int fi = f.rec[static_cast<std::size_t>(a)];
                if (fi < 0) {
                    complete = false;
                    row.antenna_argmax.push_back(-1);
                    row.cfos_hz.push_back(std::nan(""));
                    continue;
                }
                const auto& s = scores[static_cast<std::size_t>(fi)];
                in.scores.push_back(s);
                in.cfos_hz.push_back(test.records[rec_of_feat[static_cast<std::size_t>(fi)]].cfo_hz);
                row.antenna_argmax.push_back(predict_direct(s));
                row.cfos_hz.push_back(in.cfos_hz.back());
            }
            if (mode == FusionMode::Direct) {
                for (int a = 0; a < antennas; ++a) {
                    truths.push_back(f.label);
                    const int am = row.antenna_argmax[static_cast<std::size_t>(a)];
                    preds.push_back(am >= 0 ? std::optional<int>(am) : std::nullopt);
                }
                row.predicted = row.antenna_argmax.front() >= 0 ? std::optional<int>(row.antenna_argmax.front()) : std::nullopt;
            } else {
                row.predicted = complete ? fuse(mode, in, db, opts) : std::nullopt;
                truths.push_back(f.label);
                preds.push_back(row.predicted);
            }
            ev.decisions.push_back(std::move(row));
        }
        ev.metrics.push_back(summarize(fname, scenario, mode, classes, truths, preds));
    }
    return ev;
}

// ---------------------------------------------------------------- reports

const ModeMetrics* MetricsReport::find(const std::string& feature, const std::string& scenario,
                                       const std::string& mode) const {
    for (const auto& e : entries)
        if (e.feature == feature && e.scenario == scenario && e.mode == mode) return &e;
    return nullptr;
}

double MetricsReport::mean_accuracy(const std::string& feature, const std::string& mode,
                                    std::span<const std::string> scenarios) const {
    if (scenarios.empty()) throw InvalidArgument("no scenarios to average");
    double sum = 0.0;
    for (const auto& s : scenarios) {
        const ModeMetrics* m = find(feature, s, mode);
        if (!m) throw InvalidArgument("report has no entry for " + feature + "/" + s + "/" + mode);
        sum += m->accuracy;
    }
    return sum / static_cast<double>(scenarios.size());
}

std::string report_json(const MetricsReport& r) {
    ojson training = ojson::array();
    for (const auto& [feature, res] : r.training) {
        ojson hist = ojson::array();
        for (const auto& e : res.history)
            hist.push_back({{"epoch", e.epoch},
                            {"learning_rate", e.learning_rate},
                            {"train_loss", e.train_loss},
                            {"val_loss", e.val_loss},
                            {"train_accuracy", e.train_accuracy},
                            {"val_accuracy", e.val_accuracy}});
        training.push_back({{"feature", feature}, {"best_epoch", res.best_epoch}, {"history", hist}});
    }
    ojson results = ojson::array();
    for (const auto& e : r.entries) results.push_back(metrics_to_json(e));
    const ojson j = {{"config_hash", r.config_hash},
                     {"seed", r.seed},
                     {"device_ids", r.device_ids},
                     {"detection_failures", r.detection_failures},
                     {"training", training},
                     {"results", results}};
    return j.dump(2) + "\n";
}

std::string report_csv(const MetricsReport& r) {
    std::ostringstream os;
    os << "feature,scenario,mode,total,correct,rejected,accuracy\n" << std::setprecision(17);
    for (const auto& e : r.entries) {
        int rej = 0;
        for (int x : e.rejected) rej += x;
        os << e.feature << ',' << e.scenario << ',' << e.mode << ',' << e.total << ',' << e.correct << ',' << rej << ','
           << e.accuracy << '\n';
    }
    return os.str();
}

std::string train_log_csv(const TrainResult& result) {
    std::ostringstream os;
    os << "epoch,learning_rate,train_loss,val_loss,train_accuracy,val_accuracy\n" << std::setprecision(17);
    for (const auto& e : result.history)
        os << e.epoch << ',' << e.learning_rate << ',' << e.train_loss << ',' << e.val_loss << ',' << e.train_accuracy
           << ',' << e.val_accuracy << '\n';
    return os.str();
}

void write_report(const std::string& dir, const MetricsReport& report,
                  std::span<const std::pair<std::string, std::vector<DecisionLogRow>>> decision_logs) {
    fs::create_directories(dir);
    byteio::write_file((fs::path(dir) / "report.json").string(), report_json(report));
    byteio::write_file((fs::path(dir) / "report.csv").string(), report_csv(report));
    for (const auto& [name, rows] : decision_logs)
        byteio::write_file((fs::path(dir) / ("decisions_" + name + ".csv")).string(), decision_log_csv(rows));
}

MetricsReport run_experiment(const ExperimentConfig& cfg) {
    const SimulatedData data = simulate(cfg);
    MetricsReport report;
    report.config_hash = config_hash(cfg);
    report.seed = cfg.seed;
    report.device_ids = data.train.device_ids;
    report.detection_failures = data.detection_failures;

    std::vector<std::pair<std::string, std::vector<DecisionLogRow>>> logs;
    std::optional<CfoDatabase> db;
    for (FeatureKind kind : cfg.features) {
        if (!db) db = cfo_database_from(data.train, kind, cfg.scenario.num_antennas);
        TrainedClassifier tc = train_classifier(data.train, kind, cfg.model, cfg.train, cfg.seed);
        for (const auto& [name, test] : data.tests) {
            Evaluation ev = evaluate_scenario(tc.model, kind, *db, test, name, cfg.modes, cfg.fusion);
            for (auto& m : ev.metrics) report.entries.push_back(std::move(m));
            logs.emplace_back(to_string(kind) + "_" + name, std::move(ev.decisions));
        }
        if (!cfg.output_dir.empty()) {
            fs::create_directories(cfg.output_dir);
            byteio::write_file((fs::path(cfg.output_dir) / ("train_log_" + to_string(kind) + ".csv")).string(),
                               train_log_csv(tc.result));
        }
        report.training.emplace_back(to_string(kind), std::move(tc.result));
    }
    if (!cfg.output_dir.empty()) {
        write_report(cfg.output_dir, report, logs);
        byteio::write_file((fs::path(cfg.output_dir) / "cfo_db.json").string(), db->to_json() + "\n");
    }
    return report;
}

// ---------------------------------------------------------------- spectra

std::string spectra_csv(bool ltf, const PaSetupBank& bank) {
    const SetupSpectra ideal = ideal_spectra();
    const SetupSpectra mem = simulate_pa_setup(PaSetup::Memory, bank);
    const SetupSpectra nl = simulate_pa_setup(PaSetup::Nonlinearity, bank);
    const SetupSpectra comb = simulate_pa_setup(PaSetup::Combined, bank);
    auto pick = [&](const SetupSpectra& s) -> const Spectrum64& { return ltf ? s.ltf : s.stf; };
    std::ostringstream os;
    os << "index,ideal,memory,nonlinearity,combined\n" << std::setprecision(17);
    for (int k = -32; k < 32; ++k) {
        const auto b = static_cast<std::size_t>(bin_of(k));
        os << k << ',' << std::abs(pick(ideal)[b]) << ',' << std::abs(pick(mem)[b]) << ',' << std::abs(pick(nl)[b])
           << ',' << std::abs(pick(comb)[b]) << '\n';
    }
    return os.str();
}

void dump_spectra(const std::string& dir, const PaSetupBank& bank) {
    fs::create_directories(dir);
    byteio::write_file((fs::path(dir) / "spectra_stf.csv").string(), spectra_csv(false, bank));
    byteio::write_file((fs::path(dir) / "spectra_ltf.csv").string(), spectra_csv(true, bank));
}

}  // namespace rffi
