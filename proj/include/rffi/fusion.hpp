#pragma once

// Multi-antenna decision fusion with CFO-derived device weights.

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rffi/classifier.hpp"
#include "rffi/frontend.hpp"

namespace rffi {

enum class FusionMode { Direct, DF, Hybrid, Zeroing, ZeroingImproved };

FusionMode parse_fusion_mode(const std::string& name);
std::string to_string(FusionMode mode);

inline constexpr double kWeightFloorHz = 1.0;
inline constexpr double kDefaultZeroingThresholdHz = 500.0;

/// Mean training CFO per (device, antenna).
class CfoDatabase {
public:
    CfoDatabase() = default;
    CfoDatabase(std::vector<std::string> device_ids, std::vector<std::vector<double>> means,
                std::vector<std::vector<int>> counts);

    int num_devices() const { return static_cast<int>(device_ids_.size()); }
    int num_antennas() const { return means_.empty() ? 0 : static_cast<int>(means_.front().size()); }
    const std::vector<std::string>& device_ids() const { return device_ids_; }
    double mean(int device, int antenna) const;
    int count(int device, int antenna) const;

    /// {"device_id": [mean per antenna], ...} in device order.
    std::string to_json() const;
    static CfoDatabase from_json(const std::string& text);

private:
    std::vector<std::string> device_ids_;
    std::vector<std::vector<double>> means_;  // [device][antenna]
    std::vector<std::vector<int>> counts_;
};

/// Arithmetic mean per cell. Throws InvalidArgument on an unlabeled record,
/// an out-of-range label/antenna, or an empty cell.
CfoDatabase build_cfo_database(std::span<const CfoRecord> records, const std::vector<std::string>& device_ids,
                               int num_antennas = 4);

/// weight_i = 1 / max(|cfo - mean_i|, floor).
std::vector<double> cfo_weights(double cfo_hz, const CfoDatabase& db, int antenna_index,
                                double floor_hz = kWeightFloorHz);

struct FusionInput {
    std::vector<SoftmaxScores> scores;  // one per antenna
    std::vector<double> cfos_hz;        // estimated CFO per antenna
};

struct FusionOptions {
    double zeroing_threshold_hz = kDefaultZeroingThresholdHz;
    bool normalize_weights = false;  // scale each antenna's weights to sum 1
    double weight_floor_hz = kWeightFloorHz;
};

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> v);

int predict_direct(const SoftmaxScores& scores);
int fuse_df(std::span<const SoftmaxScores> scores);
int fuse_hybrid(const FusionInput& input, const CfoDatabase& db, const FusionOptions& opts = {});
/// nullopt = rejected (every probability was zeroed).
std::optional<int> fuse_zeroing(const FusionInput& input, const CfoDatabase& db,
                                double threshold_hz = kDefaultZeroingThresholdHz);
int fuse_zeroing_improved(const FusionInput& input, const CfoDatabase& db,
                          double threshold_hz = kDefaultZeroingThresholdHz);

/// Dispatch. Direct uses `direct_antenna` only.
std::optional<int> fuse(FusionMode mode, const FusionInput& input, const CfoDatabase& db,
                        const FusionOptions& opts = {}, int direct_antenna = 0);

struct DecisionLogRow {
    std::uint32_t frame_id = 0;
    int true_label = 0;
    FusionMode mode = FusionMode::DF;
    std::optional<int> predicted;
    std::vector<int> antenna_argmax;
    std::vector<double> cfos_hz;
};

/// Header + one row per decision; a rejected prediction is written as -1.
std::string decision_log_csv(std::span<const DecisionLogRow> rows);

}  // namespace rffi
