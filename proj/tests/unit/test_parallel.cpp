#include <doctest.h>

#include "rffi/dsp.hpp"
#include "rffi/parallel.hpp"

using namespace rffi;

namespace {

bool same(const ProcessedFrame& a, const ProcessedFrame& b) {
    return a.label == b.label && a.antenna == b.antenna && a.frame_id == b.frame_id &&
           a.true_cfo_hz == b.true_cfo_hz && a.estimated_cfo_hz == b.estimated_cfo_hz && a.detected == b.detected &&
           a.features == b.features;
}

}  // namespace

TEST_CASE("serial and OpenMP frame processing agree bit for bit") {
    std::vector<DeviceProfile> devs(3);
    for (int d = 0; d < 3; ++d) {
        devs[static_cast<std::size_t>(d)].device_id = "p" + std::to_string(d);
        devs[static_cast<std::size_t>(d)].kernel = random_device_kernel(3, 2, static_cast<std::uint64_t>(d + 1));
        devs[static_cast<std::size_t>(d)].nominal_cfo_hz = 10e3 * d - 10e3;
        devs[static_cast<std::size_t>(d)].cfo_frame_jitter_hz = 100.0;
    }
    std::vector<FrameJob> jobs;
    for (int i = 0; i < 120; ++i) {
        FrameJob j;
        j.profile = &devs[static_cast<std::size_t>(i % 3)];
        j.channel = make_channel(ChannelKind::NlosRayleigh, static_cast<std::uint64_t>(i));
        j.snr_db = i % 10 == 0 ? -30.0 : 25.0;
        j.frame_index = i / 4;
        j.antenna = i % 4;
        j.seed = 17;
        j.layout = StreamLayout{static_cast<std::size_t>(40 + i % 50), 32, 1.0};
        j.label = i % 3;
        j.frame_id = static_cast<std::uint32_t>(i / 4);
        jobs.push_back(j);
    }
    const std::vector<FeatureKind> kinds{FeatureKind::SR, FeatureKind::AS, FeatureKind::DoLoS};
    const auto s = process_frames_serial(jobs, kinds);
    const auto p = process_frames_parallel(jobs, kinds);
    REQUIRE(s.size() == jobs.size());
    REQUIRE(p.size() == jobs.size());
    int detected = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(same(s[i], p[i]));
        detected += s[i].detected ? 1 : 0;
    }
    CHECK(detected >= 100);
    CHECK(parallel_threads() >= 1);
}

TEST_CASE("serial and OpenMP inference agree bit for bit") {
    ModelConfig mc;
    mc.conv_channels = {8, 8, 16, 16};
    mc.fc_hidden = 32;
    const Model m = build_model(mc);
    Rng rng(3);
    std::normal_distribution<float> g(0.0f, 1.0f);
    std::vector<std::vector<float>> feats(150, std::vector<float>(128));
    for (auto& f : feats)
        for (auto& v : f) v = g(rng);
    const auto s = infer_serial(m, feats);
    const auto p = infer_parallel(m, feats);
    REQUIRE(s.size() == 150);
    CHECK(s == p);
}
