#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "rffi/features.hpp"
#include "rffi/impairments.hpp"
#include "rffi/preamble.hpp"

using namespace rffi;

namespace {

PreambleSymbols symbols_of(const ComplexFrame& f) { return segment_symbols(f); }

ComplexFrame through(const VolterraKernel& k, const ChannelRealization& ch = ChannelRealization::identity()) {
    DeviceProfile p;
    p.device_id = "f";
    p.kernel = k;
    return apply_channel(transmit(p, 0.0), ch);
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

TEST_CASE("feature lengths and names") {
    const auto s = symbols_of(generate_preamble());
    CHECK(extract_sr(s).length() == 128);
    CHECK(extract_as(s).length() == 128);
    CHECK(extract_dolos(s).length() == 64);
    CHECK(extract_eq(s).length() == 128);
    CHECK(feature_length(FeatureKind::DoLoS) == 64);
    CHECK(parse_feature_kind("sr") == FeatureKind::SR);
    CHECK(to_string(FeatureKind::SR_UD) == "ud");
    CHECK_THROWS(parse_feature_kind("xx"));
}

TEST_CASE("SR") {
    const auto ideal = extract_sr(symbols_of(generate_preamble()));
    CHECK(max_abs(ideal.values) < 1e-10);

    const auto& bank = default_pa_setup_bank();
    const auto nl = extract_sr(symbols_of(normalize_power(through(bank.nonlinearity))));
    // ltf1 band occupies positions 104..115
    double band = 0.0;
    for (std::size_t i = 104; i < 116; ++i) band += nl.values[i];
    CHECK(band > 1e-3);

    auto x = through(bank.combined);
    auto y = x;
    for (auto& v : y.samples) v *= 3.0;
    const auto a = extract_sr(symbols_of(normalize_power(x)));
    const auto b = extract_sr(symbols_of(normalize_power(y)));
    for (std::size_t i = 0; i < 128; ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-12));

    // band composition against a direct DFT
    const auto s = symbols_of(normalize_power(x));
    const auto ref = oracle::naive_dft(s.ltf2.view());
    const auto f = extract_sr(s);
    const auto& om = subcarrier_sets().omega_ltf;
    for (std::size_t i = 0; i < om.size(); ++i)
        CHECK(f.values[116 + i] == doctest::Approx(std::abs(ref[static_cast<std::size_t>(bin_of(om[i]))])).epsilon(1e-9));

    FeatureOptions log_opts;
    log_opts.log_magnitude = true;
    const auto lg = extract_sr(s, log_opts);
    CHECK(lg.values[116] == doctest::Approx(std::log(std::max(f.values[116], kLogFloor))));
}

TEST_CASE("SR is blind to a flat channel") {
    const auto& bank = default_pa_setup_bank();
    const auto a = extract_sr(symbols_of(normalize_power(through(bank.combined))));
    ChannelRealization flat{{std::polar(1.0, 0.7)}, ChannelKind::LosRician, 0};
    const auto b = extract_sr(symbols_of(normalize_power(through(bank.combined, flat))));
    for (std::size_t i = 0; i < 128; ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-9));
}

TEST_CASE("AS") {
    const auto a = extract_as(symbols_of(generate_preamble()));
    // the LTS is BPSK: all 104 LTF values share one magnitude
    for (std::size_t i = 25; i < 128; ++i) CHECK(a.values[i] == doctest::Approx(a.values[24]).epsilon(1e-10));
    for (std::size_t i = 1; i < 24; ++i) CHECK(a.values[i] == doctest::Approx(a.values[0]).epsilon(1e-10));

    const auto mem = normalize_power(through(default_pa_setup_bank().memory));
    const auto am = extract_as(symbols_of(mem));
    const auto sm = extract_sr(symbols_of(mem));
    double diff = 0.0;
    for (std::size_t i = 0; i < 128; ++i) diff = std::max(diff, std::abs(am.values[i] - a.values[i]));
    CHECK(diff > 1e-3);
    CHECK(max_abs(sm.values) < 1e-10);
}

TEST_CASE("DoLoS") {
    CHECK(max_abs(extract_dolos(symbols_of(generate_preamble())).values) < 1e-10);

    // a channel shorter than the guard multiplies both symbols by the same H
    const auto ch = make_channel(ChannelKind::NlosRayleigh, 3, ChannelProfile{4, 1.5, 10.0, 5.0});
    const auto& bank = default_pa_setup_bank();
    const auto a = extract_dolos(symbols_of(through(bank.memory)));
    const auto b = extract_dolos(symbols_of(through(bank.memory, ch)));
    for (std::size_t i = 12; i < 64; ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-6));

    const auto noisy = add_awgn(generate_preamble(), 40.0, 8);
    CHECK(max_abs(extract_dolos(symbols_of(noisy)).values) < 0.3);
}

TEST_CASE("EQ") {
    const auto ideal = extract_eq(symbols_of(generate_preamble()));
    for (std::size_t i = 24; i < 128; ++i) CHECK(ideal.values[i] == doctest::Approx(1.0).epsilon(1e-10));

    const auto ch = make_channel(ChannelKind::NlosRayleigh, 21, ChannelProfile{3, 1.5, 10.0, 5.0});
    const auto eq = extract_eq_detailed(symbols_of(apply_channel(generate_preamble(), ch)));
    CHECK(eq.faded_subcarriers.empty());
    for (std::size_t i = 24; i < 128; ++i) CHECK(std::abs(eq.feature.values[i] - 1.0) < 1e-2);

    // H(k) = 0.5 - 0.5 exp(j 2 pi (k0 - k) / 64) vanishes at k0 = 5
    const double w = 2.0 * std::numbers::pi * 5.0 / 64.0;
    ChannelRealization notch{{0.5, -0.5 * std::polar(1.0, w)}, ChannelKind::NlosRayleigh, 0};
    const auto nz = extract_eq_detailed(symbols_of(apply_channel(generate_preamble(), notch)));
    REQUIRE(nz.faded_subcarriers.size() == 1);
    CHECK(nz.faded_subcarriers[0] == 5);
    const auto& zl = subcarrier_sets().zeta_ltf;
    const auto pos = static_cast<std::size_t>(std::find(zl.begin(), zl.end(), 5) - zl.begin());
    CHECK(nz.feature.values[24 + pos] == 0.0);
    CHECK(nz.feature.values[76 + pos] == 0.0);
}

TEST_CASE("SR with the CFO undone") {
    DeviceProfile p;
    p.device_id = "u";
    p.kernel = default_pa_setup_bank().combined;
    const auto s0 = transmit(p, 0.0, 64, 40);
    const auto pre0 = preprocess(s0);
    const auto u0 = pipeline_ud(s0);
    const auto sr0 = extract_sr(pre0.symbols);
    for (std::size_t i = 0; i < 128; ++i) CHECK(u0.values[i] == doctest::Approx(sr0.values[i]).epsilon(1e-6));
    CHECK(u0.kind == FeatureKind::SR_UD);

    const auto s1 = transmit(p, 100e3, 64, 40);
    const auto u1 = pipeline_ud(s1);
    const auto sr1 = extract_sr(preprocess(s1).symbols);
    double diff = 0.0;
    for (std::size_t i = 0; i < 128; ++i) diff = std::max(diff, std::abs(u1.values[i] - sr1.values[i]));
    CHECK(diff > 1e-3);
}
