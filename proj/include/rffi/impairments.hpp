#pragma once

// Received-signal model: ideal preamble -> CFO rotation -> PA (Volterra)
// -> multipath channel -> AWGN. CFO is applied to the PA input.

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rffi/types.hpp"
#include "rffi/volterra.hpp"

namespace rffi {

inline constexpr double kMaxNominalCfoHz = 312.5e3 * 20.0;
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

struct DeviceProfile {
    std::string device_id;
    VolterraKernel kernel = VolterraKernel::identity();
    double nominal_cfo_hz = 0.0;
    double cfo_session_jitter_hz = 0.0;
    double cfo_frame_jitter_hz = 0.0;

    void validate() const;
};

enum class ChannelKind { LosRician, NlosRayleigh };

ChannelKind parse_channel_kind(const std::string& name);
std::string to_string(ChannelKind kind);

struct ChannelRealization {
    std::vector<cd> taps;  // sum |h|^2 == 1
    ChannelKind kind = ChannelKind::NlosRayleigh;
    std::uint64_t seed = 0;

    static ChannelRealization identity();
};

/// Tapped-delay-line parameters shared by every realization of a family.
struct ChannelProfile {
    int num_taps = 8;              // <= 16
    double decay_samples = 1.5;    // exponential power-delay-profile constant
    double rician_k_db = 10.0;     // LOS tap power ratio (Rician only)
    double static_phase_jitter_deg = 5.0;
};

/// Multiply sample n by exp(j 2 pi cfo n / fs).
ComplexFrame apply_cfo(const ComplexFrame& frame, double cfo_hz);

/// Linear convolution with the taps, truncated to the input length.
ComplexFrame apply_channel(const ComplexFrame& frame, const ChannelRealization& channel);

/// Complex AWGN with variance = signal_power / 10^(snr/10). Signal power
/// defaults to the frame's mean power. snr_db = +inf returns the input.
ComplexFrame add_awgn(const ComplexFrame& frame, double snr_db, std::uint64_t seed,
                      std::optional<double> signal_power = std::nullopt);

/// One seeded realization of the given family.
ChannelRealization make_channel(ChannelKind kind, std::uint64_t seed, const ChannelProfile& profile = {});

/// `count` distinct realizations with seeds derived from `seed`.
std::vector<ChannelRealization> make_channel_set(ChannelKind kind, int count, std::uint64_t seed,
                                                 const ChannelProfile& profile = {});

/// Static-scenario frame-to-frame variation: each tap gets an independent
/// phase rotation uniform in [-max_deg, max_deg]. Energy is unchanged.
ChannelRealization perturb_channel(const ChannelRealization& base, std::uint64_t seed, double max_phase_deg);

/// Injected CFO for (profile, session, frame): nominal + session offset + frame jitter.
double draw_cfo(const DeviceProfile& profile, int session_index, int frame_index, std::uint64_t seed);

/// Transmitter side only: ideal preamble -> CFO -> PA, with optional zero padding.
ComplexFrame transmit(const DeviceProfile& profile, double cfo_hz, std::size_t lead = 0, std::size_t tail = 0,
                      double drive_gain = 1.0);

struct ReceivedFrame {
    ComplexFrame frame;
    double true_cfo_hz = 0.0;
};

struct StreamLayout {
    std::size_t lead = 0;  // zero samples before the preamble (noise still added)
    std::size_t tail = 0;
    double drive_gain = 1.0;  // PA input amplitude scale (input back-off)
};

/// Full pipeline for one antenna. The CFO depends on (seed, session, frame) only,
/// so every antenna of a frame sees the same transmitter; noise additionally
/// depends on the antenna index. The SNR reference power is measured over the
/// preamble span of the channel output.
ReceivedFrame synthesize_received(const DeviceProfile& profile, const ChannelRealization& channel, double snr_db,
                                  int session_index, int frame_index, std::uint64_t seed, int antenna_index = 0,
                                  const StreamLayout& layout = {});

}  // namespace rffi
