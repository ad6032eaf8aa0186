#include "rffi/dsp.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rffi/error.hpp"

namespace rffi {

ComplexFrame ComplexFrame::slice(std::size_t begin, std::size_t count) const {
    if (begin + count > samples.size()) {
        throw InvalidArgument("slice out of range");
    }
    return ComplexFrame(std::vector<cd>(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                                        samples.begin() + static_cast<std::ptrdiff_t>(begin + count)),
                        sample_rate_hz);
}

void ComplexFrame::validate() const {
    if (samples.empty()) {
        throw InvalidArgument("empty frame");
    }
    if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
        throw InvalidArgument("sample rate must be positive");
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!std::isfinite(samples[i].real()) || !std::isfinite(samples[i].imag())) {
            std::ostringstream os;
            os << "non-finite sample at index " << i;
            throw InvalidArgument(os.str());
        }
    }
}

double mean_power(std::span<const cd> x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (const cd& v : x) acc += std::norm(v);
    return acc / static_cast<double>(x.size());
}

double rms(std::span<const cd> x) { return std::sqrt(mean_power(x)); }

namespace {

void fft_core(std::span<cd> x, double sign) {
    const std::size_t n = x.size();
    if (n == 0) return;
    if (!std::has_single_bit(n)) {
        throw InvalidArgument("FFT size must be a power of two");
    }
    // bit reversal
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
        const std::size_t half = len / 2;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const cd w = std::polar(1.0, ang * static_cast<double>(k));
                const cd u = x[i + k];
                const cd v = x[i + k + half] * w;
                x[i + k] = u + v;
                x[i + k + half] = u - v;
            }
        }
    }
}

}  // namespace

void fft_inplace(std::span<cd> x) { fft_core(x, -1.0); }

void ifft_inplace(std::span<cd> x) {
    fft_core(x, +1.0);
    const double scale = 1.0 / static_cast<double>(x.size());
    for (cd& v : x) v *= scale;
}

Spectrum64 dft64(std::span<const cd> block) {
    if (block.size() != kSymbolLength) {
        throw InvalidArgument("dft64 expects exactly 64 samples");
    }
    Spectrum64 out{};
    std::copy(block.begin(), block.end(), out.begin());
    fft_inplace(out);
    return out;
}

std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

cd complex_normal(Rng& rng, double variance) {
    std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

}  // namespace rffi
