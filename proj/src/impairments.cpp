#include "rffi/impairments.hpp"

#include <cmath>
#include <numbers>

#include "rffi/dsp.hpp"
#include "rffi/error.hpp"
#include "rffi/preamble.hpp"

namespace rffi {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void normalize_taps(std::vector<cd>& taps) {
    double e = 0.0;
    for (const cd& t : taps) e += std::norm(t);
    if (e <= 0.0) throw InvalidArgument("channel has zero energy");
    const double g = 1.0 / std::sqrt(e);
    for (cd& t : taps) t *= g;
}

}  // namespace

void DeviceProfile::validate() const {
    if (cfo_session_jitter_hz < 0.0 || cfo_frame_jitter_hz < 0.0) {
        throw InvalidArgument("CFO jitter must be non-negative");
    }
    if (std::abs(nominal_cfo_hz) > kMaxNominalCfoHz) {
        throw InvalidArgument("nominal CFO outside sanity bound");
    }
}

ChannelKind parse_channel_kind(const std::string& name) {
    if (name == "los" || name == "LOS-Rician") return ChannelKind::LosRician;
    if (name == "nlos" || name == "NLOS-Rayleigh") return ChannelKind::NlosRayleigh;
    throw InvalidArgument("unknown channel kind: " + name);
}

std::string to_string(ChannelKind kind) { return kind == ChannelKind::LosRician ? "los" : "nlos"; }

ChannelRealization ChannelRealization::identity() { return ChannelRealization{{cd{1.0, 0.0}}, ChannelKind::LosRician, 0}; }

ComplexFrame apply_cfo(const ComplexFrame& frame, double cfo_hz) {
    ComplexFrame out = frame;
    if (cfo_hz == 0.0) return out;
    const double w = 2.0 * std::numbers::pi * cfo_hz / frame.sample_rate_hz;
    for (std::size_t n = 0; n < out.size(); ++n) out[n] *= std::polar(1.0, w * static_cast<double>(n));
    return out;
}

ComplexFrame apply_channel(const ComplexFrame& frame, const ChannelRealization& channel) {
    const std::vector<cd>& h = channel.taps;
    std::vector<cd> out(frame.size());
    for (std::size_t n = 0; n < frame.size(); ++n) {
        cd acc{};
        const std::size_t kmax = std::min(h.size(), n + 1);
        for (std::size_t k = 0; k < kmax; ++k) acc += h[k] * frame[n - k];
        out[n] = acc;
    }
    return ComplexFrame(std::move(out), frame.sample_rate_hz);
}

ComplexFrame add_awgn(const ComplexFrame& frame, double snr_db, std::uint64_t seed, std::optional<double> signal_power) {
    if (std::isinf(snr_db) && snr_db > 0.0) return frame;
    const double p = signal_power.value_or(mean_power(frame.view()));
    if (!(p > 0.0)) throw InvalidArgument("cannot set SNR on a zero-power frame");
    const double variance = p / std::pow(10.0, snr_db / 10.0);
    Rng rng(seed);
    ComplexFrame out = frame;
    for (cd& v : out.samples) v += complex_normal(rng, variance);
    return out;
}

ChannelRealization make_channel(ChannelKind kind, std::uint64_t seed, const ChannelProfile& profile) {
    if (profile.num_taps < 1 || profile.num_taps > 16) throw InvalidArgument("channel needs 1..16 taps");
    Rng rng(seed);
    std::vector<double> pdp(static_cast<std::size_t>(profile.num_taps));
    double total = 0.0;
    for (int n = 0; n < profile.num_taps; ++n) {
        pdp[static_cast<std::size_t>(n)] = std::exp(-static_cast<double>(n) / profile.decay_samples);
        total += pdp[static_cast<std::size_t>(n)];
    }
    double scatter = 1.0;
    double los = 0.0;
    if (kind == ChannelKind::LosRician) {
        const double k = std::pow(10.0, profile.rician_k_db / 10.0);
        los = k / (k + 1.0);
        scatter = 1.0 / (k + 1.0);
    }
    std::vector<cd> taps(pdp.size());
    for (std::size_t n = 0; n < taps.size(); ++n) taps[n] = complex_normal(rng, scatter * pdp[n] / total);
    if (kind == ChannelKind::LosRician) {
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        taps[0] += std::polar(std::sqrt(los), phase(rng));
    }
    normalize_taps(taps);
    return ChannelRealization{std::move(taps), kind, seed};
}

std::vector<ChannelRealization> make_channel_set(ChannelKind kind, int count, std::uint64_t seed,
                                                 const ChannelProfile& profile) {
    if (count < 1) throw InvalidArgument("channel set needs count >= 1");
    std::vector<ChannelRealization> set;
    set.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) set.push_back(make_channel(kind, derive_seed(seed, 0xc4a1ULL, i), profile));
    return set;
}

ChannelRealization perturb_channel(const ChannelRealization& base, std::uint64_t seed, double max_phase_deg) {
    Rng rng(seed);
    const double max_rad = max_phase_deg * std::numbers::pi / 180.0;
    std::uniform_real_distribution<double> phase(-max_rad, max_rad);
    ChannelRealization out = base;
    for (cd& t : out.taps) t *= std::polar(1.0, phase(rng));
    out.seed = seed;
    return out;
}

double draw_cfo(const DeviceProfile& profile, int session_index, int frame_index, std::uint64_t seed) {
    const std::uint64_t dev = fnv1a(profile.device_id);
    double cfo = profile.nominal_cfo_hz;
    if (profile.cfo_session_jitter_hz > 0.0) {
        Rng rng(derive_seed(seed, dev, 0x5e55ULL, session_index));
        cfo += std::normal_distribution<double>(0.0, profile.cfo_session_jitter_hz)(rng);
    }
    if (profile.cfo_frame_jitter_hz > 0.0) {
        Rng rng(derive_seed(seed, dev, 0xf7a3ULL, session_index, frame_index));
        cfo += std::normal_distribution<double>(0.0, profile.cfo_frame_jitter_hz)(rng);
    }
    return cfo;
}

ComplexFrame transmit(const DeviceProfile& profile, double cfo_hz, std::size_t lead, std::size_t tail,
                      double drive_gain) {
    ComplexFrame x = apply_cfo(generate_preamble(), cfo_hz);
    if (drive_gain != 1.0) {
        for (cd& v : x.samples) v *= drive_gain;
    }
    ComplexFrame pa = volterra_time_1d(profile.kernel, x);
    if (lead == 0 && tail == 0) return pa;
    std::vector<cd> padded(lead + pa.size() + tail);
    std::copy(pa.samples.begin(), pa.samples.end(), padded.begin() + static_cast<std::ptrdiff_t>(lead));
    return ComplexFrame(std::move(padded), pa.sample_rate_hz);
}

ReceivedFrame synthesize_received(const DeviceProfile& profile, const ChannelRealization& channel, double snr_db,
                                  int session_index, int frame_index, std::uint64_t seed, int antenna_index,
                                  const StreamLayout& layout) {
    profile.validate();
    const double cfo = draw_cfo(profile, session_index, frame_index, seed);
    const ComplexFrame tx = transmit(profile, cfo, layout.lead, layout.tail, layout.drive_gain);
    ComplexFrame rx = apply_channel(tx, channel);
    const double ref_power = mean_power(std::span<const cd>(rx.samples).subspan(layout.lead, kPreambleLength));
    const std::uint64_t noise_seed =
        derive_seed(seed, fnv1a(profile.device_id), 0x40a5ULL, session_index, frame_index, antenna_index);
    rx = add_awgn(rx, snr_db, noise_seed, ref_power);
    return ReceivedFrame{std::move(rx), cfo};
}

}  // namespace rffi
