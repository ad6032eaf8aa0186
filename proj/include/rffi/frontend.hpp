#pragma once

// Receiver preprocessing: packet detection, CFO estimation and compensation,
// power normalization, symbol segmentation.

#include <cstdint>
#include <optional>
#include <string>

#include "rffi/preamble.hpp"
#include "rffi/types.hpp"

namespace rffi {

struct CfoRecord {
    std::optional<int> device_label;  // known during training only
    int antenna_index = 0;
    double estimated_cfo_hz = 0.0;
    std::uint32_t frame_id = 0;
};

struct DetectorConfig {
    int window = 32;             // lag-16 autocorrelation window
    double threshold = 0.8;      // normalized metric
    int plateau = 16;            // consecutive samples above threshold
    double path_fraction = 0.5;  // earliest LTS peak >= fraction * max is taken as the first path
    int path_search = 8;
    double lts_periodicity = 0.8;  // normalized lag-64 autocorrelation required at the chosen T1 start
};

/// Index of the first sample of t1. Throws NoPacketFound.
std::size_t detect_packet(const ComplexFrame& stream, const DetectorConfig& cfg = {});

/// Coarse (STF, lag 16) then fine (LTF, lag 64) estimate; the fine value is
/// unwrapped against the coarse one. Input must be start-aligned, >= 320 samples.
double estimate_cfo(const ComplexFrame& preamble);

/// Separate stages, exposed for tests.
double estimate_cfo_coarse(const ComplexFrame& preamble);
double estimate_cfo_fine(const ComplexFrame& preamble);

ComplexFrame compensate_cfo(const ComplexFrame& preamble, double cfo_hz);

/// Scale to unit RMS. Throws InvalidArgument on a zero frame.
ComplexFrame normalize_power(const ComplexFrame& frame);

struct Preprocessed {
    PreambleSymbols symbols;
    CfoRecord cfo;
    ComplexFrame preamble;  // compensated, normalized, 320 samples
    std::size_t start_index = 0;
};

Preprocessed preprocess(const ComplexFrame& stream, int antenna_index = 0, std::uint32_t frame_id = 0,
                        const DetectorConfig& cfg = {});

}  // namespace rffi
