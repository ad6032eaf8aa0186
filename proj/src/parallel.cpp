#include "rffi/parallel.hpp"

#include <algorithm>

#include <omp.h>

#include "rffi/error.hpp"
#include "rffi/frontend.hpp"

namespace rffi {

namespace {

constexpr std::size_t kInferChunk = 64;

ProcessedFrame finish(const ComplexFrame& stream, std::span<const FeatureKind> kinds, const FeatureOptions& opts,
                      ProcessedFrame out) {
    try {
        const Preprocessed pre = preprocess(stream, out.antenna, out.frame_id);
        out.estimated_cfo_hz = pre.cfo.estimated_cfo_hz;
        out.detected = true;
        out.features.reserve(kinds.size());
        for (FeatureKind k : kinds) {
            const RffFeature f = extract(k, pre, opts);
            out.features.emplace_back(f.values.begin(), f.values.end());
        }
    } catch (const NoPacketFound&) {
        out.detected = false;
        out.features.clear();
    }
    return out;
}

ProcessedFrame process_one(const FrameJob& job, std::span<const FeatureKind> kinds, const FeatureOptions& opts) {
    if (!job.profile) throw InvalidArgument("frame job without a device profile");
    const ReceivedFrame rx = synthesize_received(*job.profile, job.channel, job.snr_db, job.session_index,
                                                 job.frame_index, job.seed, job.antenna, job.layout);
    ProcessedFrame out;
    out.label = job.label;
    out.antenna = job.antenna;
    out.frame_id = job.frame_id;
    out.true_cfo_hz = rx.true_cfo_hz;
    return finish(rx.frame, kinds, opts, std::move(out));
}

// Exceptions must not escape an OpenMP region; the first one is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(rffi_parallel_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

void infer_chunk(const Model& model, std::span<const std::vector<float>> features, std::size_t begin,
                 std::vector<SoftmaxScores>& out) {
    const std::size_t n = std::min(kInferChunk, features.size() - begin);
    auto scores = model.forward_batch(features.subspan(begin, n));
    for (std::size_t i = 0; i < n; ++i) out[begin + i] = std::move(scores[i]);
}

}  // namespace

std::vector<ProcessedFrame> process_frames_serial(std::span<const FrameJob> jobs, std::span<const FeatureKind> kinds,
                                                  const FeatureOptions& opts) {
    std::vector<ProcessedFrame> out;
    out.reserve(jobs.size());
    for (const auto& job : jobs) out.push_back(process_one(job, kinds, opts));
    return out;
}

std::vector<ProcessedFrame> process_frames_parallel(std::span<const FrameJob> jobs,
                                                    std::span<const FeatureKind> kinds,
                                                    const FeatureOptions& opts) {
    std::vector<ProcessedFrame> out(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t i) { out[i] = process_one(jobs[i], kinds, opts); });
    return out;
}

std::vector<ProcessedFrame> extract_frames_parallel(std::span<const ComplexFrame> streams,
                                                    std::span<const FeatureKind> kinds,
                                                    const FeatureOptions& opts) {
    std::vector<ProcessedFrame> out(streams.size());
    parallel_for(streams.size(), [&](std::size_t i) {
        ProcessedFrame p;
        p.frame_id = static_cast<std::uint32_t>(i);
        out[i] = finish(streams[i], kinds, opts, std::move(p));
    });
    return out;
}

std::vector<SoftmaxScores> infer_serial(const Model& model, std::span<const std::vector<float>> features) {
    std::vector<SoftmaxScores> out(features.size());
    for (std::size_t begin = 0; begin < features.size(); begin += kInferChunk) infer_chunk(model, features, begin, out);
    return out;
}

std::vector<SoftmaxScores> infer_parallel(const Model& model, std::span<const std::vector<float>> features) {
    std::vector<SoftmaxScores> out(features.size());
    const std::size_t chunks = (features.size() + kInferChunk - 1) / kInferChunk;
    parallel_for(chunks, [&](std::size_t c) { infer_chunk(model, features, c * kInferChunk, out); });
    return out;
}

int parallel_threads() { return omp_get_max_threads(); }

}  // namespace rffi
