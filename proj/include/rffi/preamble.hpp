#pragma once

// Legacy 802.11 OFDM preamble (20 MHz): ten 16-sample short training symbols,
// a 32-sample guard (GI2) and two 64-sample long training symbols.
//
// Subcarrier k in [-32, 31] lives in DFT bin (k + 64) mod 64 everywhere in
// this library (see bin_of / subcarrier_of in dsp.hpp).

#include <array>
#include <vector>

#include "rffi/dsp.hpp"
#include "rffi/types.hpp"

namespace rffi {

struct SubcarrierSets {
    std::vector<int> zeta_stf;    // 12 active STS subcarriers
    std::vector<int> zeta_ltf;    // 52 active LTS subcarriers
    std::vector<int> zeta_total;  // [-32, 31]
    std::vector<int> omega_stf;   // zeta_total \ zeta_stf (52)
    std::vector<int> omega_ltf;   // zeta_total \ zeta_ltf (12)
};

/// Constant index sets, each sorted ascending by subcarrier index.
const SubcarrierSets& subcarrier_sets();

/// Frequency-domain STS / LTS values indexed by DFT bin.
const Spectrum64& sts_frequency_values();
const Spectrum64& lts_frequency_values();

/// One 64-sample long training symbol (time domain, same scale as generate_preamble).
std::vector<cd> lts_time_symbol();

/// 320-sample preamble at unit RMS. Only 20 MHz is supported.
ComplexFrame generate_preamble(double sample_rate_hz = kDefaultSampleRateHz);

struct PreambleSymbols {
    ComplexFrame stf1;  // t2..t5
    ComplexFrame stf2;  // t6..t9
    ComplexFrame ltf1;  // T1
    ComplexFrame ltf2;  // T2
};

inline constexpr std::size_t kStf1Begin = 16;
inline constexpr std::size_t kStf2Begin = 80;
inline constexpr std::size_t kGi2Begin = 160;
inline constexpr std::size_t kLtf1Begin = 192;
inline constexpr std::size_t kLtf2Begin = 256;

/// Cut the four analysis symbols from a start-aligned preamble (length >= 320).
PreambleSymbols segment_symbols(const ComplexFrame& preamble);

}  // namespace rffi
