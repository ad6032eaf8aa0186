#pragma once

// Experiment orchestration: synthetic device population, train / test
// dataset synthesis over disjoint channel sets, classifier training,
// fusion evaluation, metrics and report files.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rffi/classifier.hpp"
#include "rffi/dataset.hpp"
#include "rffi/features.hpp"
#include "rffi/fusion.hpp"
#include "rffi/impairments.hpp"
#include "rffi/volterra.hpp"

namespace rffi {

struct ScenarioConfig {
    int num_devices = 10;
    int num_antennas = 4;
    std::string kernel_bank;  // optional JSON bank; random kernels otherwise
    int kernel_dimension = 3;
    int kernel_memory = 2;
    KernelScales kernel_scales;
    std::uint64_t population_seed = 2024;
    double nominal_cfo_span_hz = 50e3;  // nominal CFO ~ U(-span, span)
    double session_jitter_hz = 200.0;
    double frame_jitter_hz = 100.0;
    double drift_session_jitter_hz = 3000.0;
    double snr_db = 28.0;
    double drive_gain = 1.0;
    ChannelProfile channel;
    int train_frames = 128;  // per device per antenna
    int test_frames = 64;
    int train_sessions = 4;
    int lead_min = 40;
    int lead_max = 120;
    int tail = 32;

    void validate() const;
};

struct TestScenario {
    std::string name;
    ChannelKind channel = ChannelKind::NlosRayleigh;
    bool dynamic = false;  // fresh channel per frame, else one perturbed realization
    bool drift = false;    // fresh session offset at the drift jitter scale
};

/// L1, L2 (LOS static), L3 (NLOS static), M (NLOS dynamic), drift (NLOS dynamic + drift).
std::vector<TestScenario> default_test_scenarios();

struct ExperimentConfig {
    ScenarioConfig scenario;
    std::vector<FeatureKind> features{FeatureKind::SR, FeatureKind::AS};
    std::vector<FusionMode> modes{FusionMode::Direct, FusionMode::DF, FusionMode::Hybrid, FusionMode::Zeroing,
                                  FusionMode::ZeroingImproved};
    std::vector<TestScenario> tests = default_test_scenarios();
    ModelConfig model;  // input_length / num_classes are filled in per feature
    TrainConfig train;
    FeatureOptions feature_options;
    FusionOptions fusion;
    std::uint64_t seed = 1;
    std::string output_dir;

    void validate() const;
};

nlohmann::ordered_json to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
/// Unknown keys are rejected. A "scenario_path" entry is resolved relative to `base_dir`.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
ExperimentConfig load_experiment_config(const std::string& path);

std::uint64_t fnv1a64(std::string_view data);
/// Hex FNV-1a of the canonical config JSON (output_dir excluded).
std::string config_hash(const ExperimentConfig& cfg);

std::vector<DeviceProfile> build_population(const ScenarioConfig& cfg);

struct SimulatedData {
    FeatureDataset train;
    std::vector<std::pair<std::string, FeatureDataset>> tests;
    std::size_t detection_failures = 0;
};

/// Train split: dynamic NLOS, fresh channel per (frame, antenna), sessions
/// 0..train_sessions-1. Test splits per cfg.tests. Throws if any channel seed
/// is shared between train and test.
SimulatedData simulate(const ExperimentConfig& cfg, bool parallel = true);

/// Raw received streams of one split ("train" or a test scenario name).
std::vector<LabeledFrame> synthesize_streams(const ExperimentConfig& cfg, const std::string& split);

LabeledFeatures training_set(const FeatureDataset& ds, FeatureKind kind);
CfoDatabase cfo_database_from(const FeatureDataset& train, FeatureKind kind, int num_antennas);

struct TrainedClassifier {
    FeatureKind kind = FeatureKind::SR;
    Model model;
    TrainResult result;
};

/// Model and shuffling seeds are derived from (seed, kind).
TrainedClassifier train_classifier(const FeatureDataset& train, FeatureKind kind, ModelConfig model_cfg,
                                   TrainConfig train_cfg, std::uint64_t seed);

/// counts[truth][prediction]. Throws InvalidArgument on empty input, unequal
/// lengths or a label outside [0, classes).
std::vector<std::vector<int>> confusion_matrix(std::span<const int> predictions, std::span<const int> truths,
                                               int classes);

struct ModeMetrics {
    std::string feature;
    std::string scenario;
    std::string mode;
    std::size_t total = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    std::vector<std::vector<int>> confusion;  // rows + rejected = per-device totals
    std::vector<int> rejected;
    std::vector<int> device_totals;
    std::vector<double> per_device_accuracy;
};

struct Evaluation {
    std::vector<ModeMetrics> metrics;
    std::vector<DecisionLogRow> decisions;
};

/// Scores every frame of `test` (kind records), then applies every mode.
/// Direct is scored per (frame, antenna). Frames missing an antenna count
/// as rejected.
Evaluation evaluate_scenario(const Model& model, FeatureKind kind, const CfoDatabase& db, const FeatureDataset& test,
                             const std::string& scenario, std::span<const FusionMode> modes,
                             const FusionOptions& opts, bool parallel = true);

struct MetricsReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<std::string> device_ids;
    std::size_t detection_failures = 0;
    std::vector<ModeMetrics> entries;
    std::vector<std::pair<std::string, TrainResult>> training;

    const ModeMetrics* find(const std::string& feature, const std::string& scenario, const std::string& mode) const;
    /// Mean accuracy over the listed scenarios; throws if any entry is missing.
    double mean_accuracy(const std::string& feature, const std::string& mode,
                         std::span<const std::string> scenarios) const;
};

std::string report_json(const MetricsReport& report);
std::string report_csv(const MetricsReport& report);
std::string train_log_csv(const TrainResult& result);

/// Writes report.json, report.csv and the decision logs under `dir`.
void write_report(const std::string& dir, const MetricsReport& report,
                  std::span<const std::pair<std::string, std::vector<DecisionLogRow>>> decision_logs);

/// simulate -> train per feature -> evaluate per test scenario. Writes the
/// report, decision logs, train logs and CFO database when output_dir is set.
MetricsReport run_experiment(const ExperimentConfig& cfg);

/// Per-subcarrier amplitudes (index -32..31) of one stf or ltf symbol for the
/// ideal preamble and the three PA setups.
std::string spectra_csv(bool ltf, const PaSetupBank& bank = default_pa_setup_bank());
/// Writes spectra_stf.csv and spectra_ltf.csv.
void dump_spectra(const std::string& dir, const PaSetupBank& bank = default_pa_setup_bank());

}  // namespace rffi
