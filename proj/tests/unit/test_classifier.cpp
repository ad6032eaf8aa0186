#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rffi/classifier.hpp"
#include "rffi/dsp.hpp"
#include "rffi/error.hpp"

using namespace rffi;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.input_length = 16;
    c.num_classes = 3;
    c.conv_channels = {2, 3, 4, 4};
    c.fc_hidden = 8;
    c.seed = 5;
    return c;
}

LabeledFeatures separable(int per_class, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<float> n(0.0f, 0.1f);
    LabeledFeatures d;
    for (int i = 0; i < 3 * per_class; ++i) {
        const int c = i % 3;
        std::vector<float> f(128);
        for (int j = 0; j < 128; ++j) f[static_cast<std::size_t>(j)] = n(rng) + (j / 40 == c ? 1.0f : 0.0f);
        d.features.push_back(std::move(f));
        d.labels.push_back(c);
    }
    return d;
}

std::vector<float> random_feature(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<float> g(0.0f, 1.0f);
    std::vector<float> f(n);
    for (auto& v : f) v = g(rng);
    return f;
}

}  // namespace

TEST_CASE("model construction and forward") {
    ModelConfig cfg;
    const Model a = build_model(cfg);
    const Model b = build_model(cfg);
    const auto x = random_feature(128, 1);
    const auto pa = a.forward(std::span<const float>(x));
    REQUIRE(pa.size() == 10);
    CHECK(std::accumulate(pa.begin(), pa.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-5));
    for (double p : pa) CHECK(p >= 0.0);
    CHECK(pa == b.forward(std::span<const float>(x)));

    const std::vector<float> zero(128, 0.0f);
    const auto pz = a.forward(std::span<const float>(zero));
    CHECK(*std::max_element(pz.begin(), pz.end()) - *std::min_element(pz.begin(), pz.end()) < 0.5);

    ModelConfig other = cfg;
    other.seed = 2;
    CHECK(build_model(other).forward(std::span<const float>(x)) != pa);

    CHECK_THROWS_AS(a.forward(std::span<const float>(random_feature(64, 1))), InvalidArgument);
    ModelConfig bad = cfg;
    bad.input_length = 4;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);

    std::vector<std::vector<float>> batch{x, zero, random_feature(128, 2)};
    const auto pb = a.forward_batch(batch);
    REQUIRE(pb.size() == 3);
    for (std::size_t i = 0; i < 10; ++i) CHECK(pb[0][i] == doctest::Approx(pa[i]).epsilon(1e-5));
}

TEST_CASE("learning-rate schedule") {
    TrainConfig t;
    CHECK(t.learning_rate(0) == doctest::Approx(1e-3));
    CHECK(t.learning_rate(3) == doctest::Approx(1.25e-4));
}

TEST_CASE("training on separable data") {
    const auto data = separable(100, 3);
    ModelConfig mc;
    mc.num_classes = 3;
    TrainConfig tc;
    tc.epochs = 10;
    Model m = build_model(mc);
    const auto r = train(m, data, tc);
    CHECK(r.history.size() >= 1);
    const auto test = separable(30, 99);
    int correct = 0;
    for (std::size_t i = 0; i < test.labels.size(); ++i) {
        const auto p = m.forward(std::span<const float>(test.features[i]));
        correct += static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) == test.labels[i] ? 1 : 0;
    }
    CHECK(correct == static_cast<int>(test.labels.size()));

    Model m2 = build_model(mc);
    const auto r2 = train(m2, data, tc);
    REQUIRE(r2.history.size() == r.history.size());
    for (std::size_t e = 0; e < r.history.size(); ++e) {
        CHECK(r2.history[e].train_loss == r.history[e].train_loss);
        CHECK(r2.history[e].val_loss == r.history[e].val_loss);
    }
    CHECK(encode_checkpoint(m2) == encode_checkpoint(m));
}

TEST_CASE("training input validation") {
    Model m = build_model(tiny_config());
    TrainConfig tc;
    CHECK_THROWS_AS(train(m, LabeledFeatures{}, tc), TrainingError);
    LabeledFeatures d;
    d.features.push_back(std::vector<float>(16, 0.0f));
    d.labels.push_back(7);
    CHECK_THROWS_AS(train(m, d, tc), InvalidArgument);
    d.labels[0] = 0;
    d.features[0].resize(10);
    CHECK_THROWS_AS(train(m, d, tc), InvalidArgument);
    d.features[0] = std::vector<float>(16, std::nanf(""));
    d.features.push_back(d.features[0]);
    d.labels.push_back(1);
    CHECK_THROWS_AS(train(m, d, tc), TrainingError);
}

TEST_CASE("gradient check") {
    const auto cfg = tiny_config();
    Rng rng(8);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> x(16);
    for (auto& v : x) v = g(rng);
    const auto r = gradient_check(cfg, x, 1);
    CHECK(r.checked > 0);
    CHECK(r.max_relative_error < 1e-4);
    const auto r2 = gradient_check(cfg, x, 1);
    CHECK(r2.max_relative_error == r.max_relative_error);
    CHECK(r2.checked == r.checked);
}

TEST_CASE("checkpoint") {
    Model m = build_model(tiny_config());
    const auto bytes = encode_checkpoint(m);
    const Model back = decode_checkpoint(bytes);
    CHECK(back.config() == m.config());
    CHECK(encode_checkpoint(back) == bytes);
    const auto x = random_feature(16, 3);
    CHECK(back.forward(std::span<const float>(x)) == m.forward(std::span<const float>(x)));

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 4)), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(bytes + "!"), FormatError);
}
