#include "rffi/preamble.hpp"

#include <algorithm>
#include <cmath>

#include "rffi/error.hpp"

namespace rffi {

namespace {

std::vector<int> complement(const std::vector<int>& total, const std::vector<int>& set) {
    std::vector<int> out;
    std::set_difference(total.begin(), total.end(), set.begin(), set.end(), std::back_inserter(out));
    return out;
}

SubcarrierSets make_sets() {
    SubcarrierSets s;
    s.zeta_stf = {-24, -20, -16, -12, -8, -4, 4, 8, 12, 16, 20, 24};
    for (int k = -26; k <= 26; ++k) {
        if (k != 0) s.zeta_ltf.push_back(k);
    }
    for (int k = -32; k <= 31; ++k) s.zeta_total.push_back(k);
    s.omega_stf = complement(s.zeta_total, s.zeta_stf);
    s.omega_ltf = complement(s.zeta_total, s.zeta_ltf);
    return s;
}

Spectrum64 make_sts() {
    // IEEE 802.11a-1999 short training sequence, scaled by sqrt(13/6).
    const double a = std::sqrt(13.0 / 6.0);
    const cd p{a, a};
    const struct { int k; int sign; } pattern[] = {
        {-24, +1}, {-20, -1}, {-16, +1}, {-12, -1}, {-8, -1}, {-4, +1},
        {4, -1},   {8, -1},   {12, +1},  {16, +1},  {20, +1}, {24, +1},
    };
    Spectrum64 s{};
    for (const auto& e : pattern) s[bin_of(e.k)] = static_cast<double>(e.sign) * p;
    return s;
}

Spectrum64 make_lts() {
    // L_{-26..26}, DC excluded.
    static constexpr int values[53] = {1,  1,  -1, -1, 1,  1,  -1, 1,  -1, 1,  1,  1,  1,  1,
                                       1,  -1, -1, 1,  1,  -1, 1,  -1, 1,  1,  1,  1,  0,  1,
                                       -1, -1, 1,  1,  -1, 1,  -1, 1,  -1, -1, -1, -1, -1, 1,
                                       1,  -1, -1, 1,  -1, 1,  -1, 1,  1,  1,  1};
    Spectrum64 s{};
    for (int k = -26; k <= 26; ++k) s[bin_of(k)] = values[k + 26];
    return s;
}

std::vector<cd> to_time(const Spectrum64& freq) {
    std::vector<cd> t(freq.begin(), freq.end());
    ifft_inplace(t);
    return t;
}

// Unnormalized preamble; STS and LTS carry equal average power.
std::vector<cd> make_raw_preamble() {
    const std::vector<cd> sts64 = to_time(sts_frequency_values());  // 64-periodic and 16-periodic
    const std::vector<cd> lts = to_time(lts_frequency_values());
    std::vector<cd> out(kPreambleLength);
    for (std::size_t n = 0; n < 160; ++n) out[n] = sts64[n % 16];
    for (std::size_t n = 0; n < 32; ++n) out[kGi2Begin + n] = lts[32 + n];
    for (std::size_t n = 0; n < 64; ++n) {
        out[kLtf1Begin + n] = lts[n];
        out[kLtf2Begin + n] = lts[n];
    }
    return out;
}

double preamble_scale() {
    static const double scale = 1.0 / rms(make_raw_preamble());
    return scale;
}

}  // namespace

const SubcarrierSets& subcarrier_sets() {
    static const SubcarrierSets sets = make_sets();
    return sets;
}

const Spectrum64& sts_frequency_values() {
    static const Spectrum64 s = make_sts();
    return s;
}

const Spectrum64& lts_frequency_values() {
    static const Spectrum64 s = make_lts();
    return s;
}

std::vector<cd> lts_time_symbol() {
    std::vector<cd> lts = to_time(lts_frequency_values());
    const double g = preamble_scale();
    for (cd& v : lts) v *= g;
    return lts;
}

ComplexFrame generate_preamble(double sample_rate_hz) {
    if (sample_rate_hz != kDefaultSampleRateHz) {
        throw InvalidArgument("unsupported sample rate: only 20 MHz is implemented");
    }
    static const std::vector<cd> cached = [] {
        std::vector<cd> raw = make_raw_preamble();
        const double g = preamble_scale();
        for (cd& v : raw) v *= g;
        return raw;
    }();
    return ComplexFrame(cached, sample_rate_hz);
}

PreambleSymbols segment_symbols(const ComplexFrame& preamble) {
    if (preamble.size() < kPreambleLength) {
        throw InvalidArgument("preamble shorter than 320 samples");
    }
    return PreambleSymbols{
        preamble.slice(kStf1Begin, kSymbolLength),
        preamble.slice(kStf2Begin, kSymbolLength),
        preamble.slice(kLtf1Begin, kSymbolLength),
        preamble.slice(kLtf2Begin, kSymbolLength),
    };
}

}  // namespace rffi
