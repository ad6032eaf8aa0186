#include "rffi/frontend.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "rffi/error.hpp"
#include "rffi/impairments.hpp"

namespace rffi {

namespace {

constexpr int kStsPeriod = 16;
constexpr int kLtsPeriod = 64;

// Normalized lag-16 autocorrelation metric for every start n, computed with running sums.
std::vector<double> sts_metric(std::span<const cd> r, int window) {
    const auto n_total = static_cast<std::ptrdiff_t>(r.size());
    const std::ptrdiff_t count = n_total - window - kStsPeriod + 1;
    if (count <= 0) return {};
    std::vector<double> metric(static_cast<std::size_t>(count));
    cd p{};
    double e0 = 0.0, e1 = 0.0;
    for (int m = 0; m < window; ++m) {
        p += std::conj(r[static_cast<std::size_t>(m)]) * r[static_cast<std::size_t>(m + kStsPeriod)];
        e0 += std::norm(r[static_cast<std::size_t>(m)]);
        e1 += std::norm(r[static_cast<std::size_t>(m + kStsPeriod)]);
    }
    for (std::ptrdiff_t n = 0; n < count; ++n) {
        const double denom = std::sqrt(std::max(e0, 0.0) * std::max(e1, 0.0));
        metric[static_cast<std::size_t>(n)] = denom > 1e-300 ? std::min(std::abs(p) / denom, 1.0) : 0.0;
        if (n + 1 < count) {
            const auto out = static_cast<std::size_t>(n);
            const auto in = static_cast<std::size_t>(n + window);
            p += std::conj(r[in]) * r[in + kStsPeriod] - std::conj(r[out]) * r[out + kStsPeriod];
            e0 += std::norm(r[in]) - std::norm(r[out]);
            e1 += std::norm(r[in + kStsPeriod]) - std::norm(r[out + kStsPeriod]);
        }
    }
    return metric;
}

double lts_match(std::span<const cd> r, std::size_t n, const std::vector<cd>& lts) {
    cd a{}, b{};
    for (std::size_t m = 0; m < lts.size(); ++m) {
        a += r[n + m] * std::conj(lts[m]);
        b += r[n + kLtsPeriod + m] * std::conj(lts[m]);
    }
    return std::abs(a) + std::abs(b);
}

// Normalized lag-64 autocorrelation of the 64 samples starting at n.
double lts_periodicity(std::span<const cd> r, std::size_t n) {
    cd p{};
    double e0 = 0.0, e1 = 0.0;
    for (std::size_t m = 0; m < kLtsPeriod; ++m) {
        p += std::conj(r[n + m]) * r[n + kLtsPeriod + m];
        e0 += std::norm(r[n + m]);
        e1 += std::norm(r[n + kLtsPeriod + m]);
    }
    const double denom = std::sqrt(e0 * e1);
    return denom > 1e-300 ? std::abs(p) / denom : 0.0;
}

double phase_to_hz(cd corr, int lag, double fs) { return std::arg(corr) * fs / (2.0 * std::numbers::pi * lag); }

void require_preamble(const ComplexFrame& f) {
    if (f.size() < kPreambleLength) throw InvalidArgument("preamble shorter than 320 samples");
}

}  // namespace

std::size_t detect_packet(const ComplexFrame& stream, const DetectorConfig& cfg) {
    if (stream.size() < kPreambleLength) throw InvalidArgument("stream shorter than 320 samples");
    const std::span<const cd> r = stream.view();
    const std::vector<double> metric = sts_metric(r, cfg.window);

    std::ptrdiff_t coarse = -1;
    int run = 0;
    for (std::size_t n = 0; n < metric.size(); ++n) {
        run = metric[n] >= cfg.threshold ? run + 1 : 0;
        if (run >= cfg.plateau) {
            coarse = static_cast<std::ptrdiff_t>(n) - cfg.plateau + 1;
            break;
        }
    }
    if (coarse < 0) throw NoPacketFound("no STF plateau above threshold");

    // T1 sits 192 samples after t1; the plateau may start up to window+16
    // samples early (zero lead-in) or a few dozen samples late (noise).
    static const std::vector<cd> lts = lts_time_symbol();
    const auto last = static_cast<std::ptrdiff_t>(r.size()) - 2 * kLtsPeriod;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, coarse + 96);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(last, coarse + 300);
    if (lo > hi) throw NoPacketFound("stream too short for the long training field");

    std::vector<double> match(static_cast<std::size_t>(hi - lo + 1));
    std::ptrdiff_t best = lo;
    for (std::ptrdiff_t n = lo; n <= hi; ++n) {
        match[static_cast<std::size_t>(n - lo)] = lts_match(r, static_cast<std::size_t>(n), lts);
        if (match[static_cast<std::size_t>(n - lo)] > match[static_cast<std::size_t>(best - lo)]) best = n;
    }
    const double peak = match[static_cast<std::size_t>(best - lo)];
    std::ptrdiff_t first = best;
    for (std::ptrdiff_t n = std::max(lo, best - cfg.path_search); n < best; ++n) {
        if (match[static_cast<std::size_t>(n - lo)] >= cfg.path_fraction * peak) {
            first = n;
            break;
        }
    }
    if (lts_periodicity(r, static_cast<std::size_t>(first)) < cfg.lts_periodicity) {
        throw NoPacketFound("LTS candidate is not followed by a repeated symbol");
    }
    const std::ptrdiff_t start = first - static_cast<std::ptrdiff_t>(kLtf1Begin);
    if (start < 0) throw NoPacketFound("long training field found before a complete short training field");
    return static_cast<std::size_t>(start);
}

double estimate_cfo_coarse(const ComplexFrame& preamble) {
    require_preamble(preamble);
    // t2..t9 against t3..t10; t1 absorbs the channel transient.
    cd acc{};
    for (std::size_t n = kStf1Begin; n < 144; ++n) acc += std::conj(preamble[n]) * preamble[n + kStsPeriod];
    return phase_to_hz(acc, kStsPeriod, preamble.sample_rate_hz);
}

double estimate_cfo_fine(const ComplexFrame& preamble) {
    require_preamble(preamble);
    // Second half of GI2 plus T1 against the matching span 64 samples later.
    cd acc{};
    for (std::size_t n = kGi2Begin + 16; n < kLtf2Begin; ++n) acc += std::conj(preamble[n]) * preamble[n + kLtsPeriod];
    return phase_to_hz(acc, kLtsPeriod, preamble.sample_rate_hz);
}

double estimate_cfo(const ComplexFrame& preamble) {
    const double coarse = estimate_cfo_coarse(preamble);
    const double fine = estimate_cfo_fine(preamble);
    const double ambiguity = preamble.sample_rate_hz / kLtsPeriod;
    return fine + std::round((coarse - fine) / ambiguity) * ambiguity;
}

ComplexFrame compensate_cfo(const ComplexFrame& preamble, double cfo_hz) { return apply_cfo(preamble, -cfo_hz); }

ComplexFrame normalize_power(const ComplexFrame& frame) {
    const double p = mean_power(frame.view());
    if (!(p > 0.0)) throw InvalidArgument("cannot normalize a zero frame");
    const double g = 1.0 / std::sqrt(p);
    ComplexFrame out = frame;
    for (cd& v : out.samples) v *= g;
    return out;
}

Preprocessed preprocess(const ComplexFrame& stream, int antenna_index, std::uint32_t frame_id,
                        const DetectorConfig& cfg) {
    const std::size_t start = detect_packet(stream, cfg);
    if (start + kPreambleLength > stream.size()) throw NoPacketFound("preamble truncated at end of stream");
    const ComplexFrame raw = stream.slice(start, kPreambleLength);
    const double cfo = estimate_cfo(raw);
    ComplexFrame pre = normalize_power(compensate_cfo(raw, cfo));
    PreambleSymbols symbols = segment_symbols(pre);
    return Preprocessed{std::move(symbols), CfoRecord{std::nullopt, antenna_index, cfo, frame_id}, std::move(pre), start};
}

}  // namespace rffi
