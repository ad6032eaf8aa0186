#pragma once

// RF fingerprint representations computed from the four preamble symbols.
//
// Every 128-element feature concatenates four bands in the order
// stf1, stf2, ltf1, ltf2; inside a band, bins follow ascending subcarrier index.

#include <cstdint>
#include <string>
#include <vector>

#include "rffi/frontend.hpp"
#include "rffi/preamble.hpp"

namespace rffi {

enum class FeatureKind : std::uint8_t {
    SR = 0,     // spectral regrowth on inactive subcarriers
    AS = 1,     // spectrum on active subcarriers
    DoLoS = 2,  // difference of log spectra of adjacent symbols
    EQ = 3,     // LS-equalized active subcarriers
    SR_UD = 4,  // SR after re-introducing the estimated CFO
};

FeatureKind parse_feature_kind(const std::string& name);
std::string to_string(FeatureKind kind);
int feature_length(FeatureKind kind);

struct RffFeature {
    std::vector<double> values;
    FeatureKind kind = FeatureKind::SR;

    std::size_t length() const { return values.size(); }
};

struct FeatureOptions {
    bool log_magnitude = false;  // SR / AS only
};

inline constexpr double kLogFloor = 1e-12;
inline constexpr double kDeepFade = 1e-6;

RffFeature extract_sr(const PreambleSymbols& symbols, const FeatureOptions& opts = {});
RffFeature extract_as(const PreambleSymbols& symbols, const FeatureOptions& opts = {});
RffFeature extract_dolos(const PreambleSymbols& symbols);

struct EqualizedFeature {
    RffFeature feature;
    std::vector<int> faded_subcarriers;  // |H_hat| < 1e-6, value forced to 0
};

EqualizedFeature extract_eq_detailed(const PreambleSymbols& symbols);
RffFeature extract_eq(const PreambleSymbols& symbols);

/// preprocess, then rotate the compensated preamble back by the estimated CFO
/// before segmentation and SR extraction.
RffFeature pipeline_ud(const ComplexFrame& stream, const FeatureOptions& opts = {});
RffFeature ud_from_preprocessed(const Preprocessed& pre, const FeatureOptions& opts = {});

/// Dispatch on kind for an already preprocessed frame.
RffFeature extract(FeatureKind kind, const Preprocessed& pre, const FeatureOptions& opts = {});

}  // namespace rffi
