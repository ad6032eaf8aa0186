#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rffi/types.hpp"

namespace rffi {

using Spectrum64 = std::array<cd, kSymbolLength>;

/// In-place forward FFT (unnormalized, e^{-j2πkn/N}); size must be a power of two.
void fft_inplace(std::span<cd> x);

/// In-place inverse FFT including the 1/N factor.
void ifft_inplace(std::span<cd> x);

/// 64-point DFT of a 64-sample block, natural bin order (bin b = subcarrier b or b-64).
Spectrum64 dft64(std::span<const cd> block);

/// DFT bin holding subcarrier k in [-32, 31]: (k + 64) mod 64.
constexpr int bin_of(int subcarrier) { return (subcarrier % 64 + 64) % 64; }

/// Inverse of bin_of: bins 0..31 -> 0..31, bins 32..63 -> -32..-1.
constexpr int subcarrier_of(int bin) { return bin < 32 ? bin : bin - 64; }

/// SplitMix64 finalizer; used to derive independent per-frame seeds.
std::uint64_t mix_seed(std::uint64_t x);

template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t base, Tags... tags) {
    std::uint64_t s = mix_seed(base);
    ((s = mix_seed(s ^ (static_cast<std::uint64_t>(tags) + 0x9e3779b97f4a7c15ULL))), ...);
    return s;
}

using Rng = std::mt19937_64;

/// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
cd complex_normal(Rng& rng, double variance);

}  // namespace rffi
