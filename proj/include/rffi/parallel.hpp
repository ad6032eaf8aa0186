#pragma once

// Batch kernels. Each *_parallel function is an OpenMP version of the
// matching *_serial reference and returns bit-identical results: every
// frame is seeded independently and inference runs on fixed 64-sample chunks.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rffi/classifier.hpp"
#include "rffi/features.hpp"
#include "rffi/impairments.hpp"

namespace rffi {

struct FrameJob {
    const DeviceProfile* profile = nullptr;
    ChannelRealization channel;
    double snr_db = 28.0;
    int session_index = 0;
    int frame_index = 0;
    std::uint64_t seed = 0;  // CFO seed; shared by the antennas of one frame
    int antenna = 0;
    StreamLayout layout;
    int label = 0;
    std::uint32_t frame_id = 0;
};

struct ProcessedFrame {
    int label = 0;
    int antenna = 0;
    std::uint32_t frame_id = 0;
    double true_cfo_hz = 0.0;
    double estimated_cfo_hz = 0.0;
    bool detected = false;
    std::vector<std::vector<float>> features;  // one per requested kind, empty if not detected
};

/// synthesize_received -> preprocess -> extract for every job.
std::vector<ProcessedFrame> process_frames_serial(std::span<const FrameJob> jobs, std::span<const FeatureKind> kinds,
                                                  const FeatureOptions& opts = {});
std::vector<ProcessedFrame> process_frames_parallel(std::span<const FrameJob> jobs,
                                                    std::span<const FeatureKind> kinds,
                                                    const FeatureOptions& opts = {});

/// Preprocess + extract for already received streams.
std::vector<ProcessedFrame> extract_frames_parallel(std::span<const ComplexFrame> streams,
                                                    std::span<const FeatureKind> kinds,
                                                    const FeatureOptions& opts = {});

std::vector<SoftmaxScores> infer_serial(const Model& model, std::span<const std::vector<float>> features);
std::vector<SoftmaxScores> infer_parallel(const Model& model, std::span<const std::vector<float>> features);

/// Number of OpenMP threads that parallel regions will use.
int parallel_threads();

}  // namespace rffi
