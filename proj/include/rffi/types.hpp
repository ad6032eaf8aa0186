#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace rffi {

using cd = std::complex<double>;

inline constexpr double kDefaultSampleRateHz = 20e6;
inline constexpr int kNumAntennas = 4;
inline constexpr int kSymbolLength = 64;
inline constexpr int kPreambleLength = 320;

/// Complex baseband samples plus their sample rate.
struct ComplexFrame {
    std::vector<cd> samples;
    double sample_rate_hz = kDefaultSampleRateHz;

    ComplexFrame() = default;
    explicit ComplexFrame(std::vector<cd> s, double fs = kDefaultSampleRateHz)
        : samples(std::move(s)), sample_rate_hz(fs) {}

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    cd& operator[](std::size_t i) { return samples[i]; }
    const cd& operator[](std::size_t i) const { return samples[i]; }
    std::span<const cd> view() const { return samples; }

    /// Copy of samples [begin, begin + count).
    ComplexFrame slice(std::size_t begin, std::size_t count) const;

    /// Throws InvalidArgument when empty or any sample is non-finite.
    void validate() const;
};

double mean_power(std::span<const cd> x);
double rms(std::span<const cd> x);

}  // namespace rffi
