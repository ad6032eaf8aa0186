#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "rffi/error.hpp"
#include "rffi/preamble.hpp"

using namespace rffi;

namespace {

bool contains(const std::vector<int>& v, int k) { return std::find(v.begin(), v.end(), k) != v.end(); }

double max_inactive(std::span<const cd> symbol, const std::vector<int>& inactive) {
    const auto X = oracle::naive_dft(symbol);
    double m = 0.0;
    for (int k : inactive) m = std::max(m, std::abs(X[static_cast<std::size_t>(bin_of(k))]));
    return m;
}

}  // namespace

TEST_CASE("active STS subcarriers") {
    const auto& s = subcarrier_sets();
    CHECK(s.zeta_stf == std::vector<int>{-24, -20, -16, -12, -8, -4, 4, 8, 12, 16, 20, 24});
}

TEST_CASE("active LTS subcarriers are [-26,-1] and [1,26]") {
    const auto& s = subcarrier_sets();
    REQUIRE(s.zeta_ltf.size() == 52);
    for (int k = -26; k <= 26; ++k) CHECK(contains(s.zeta_ltf, k) == (k != 0));
}

TEST_CASE("inactive sets are complements") {
    const auto& s = subcarrier_sets();
    CHECK(s.zeta_total.size() == 64);
    CHECK(s.zeta_total.front() == -32);
    CHECK(s.zeta_total.back() == 31);
    CHECK(s.omega_ltf == std::vector<int>{-32, -31, -30, -29, -28, -27, 0, 27, 28, 29, 30, 31});
    CHECK(s.omega_stf.size() == 52);
    for (int k : s.omega_stf) CHECK_FALSE(contains(s.zeta_stf, k));
    for (int k : s.zeta_stf) CHECK(contains(s.zeta_ltf, k));
    CHECK(2 * s.omega_stf.size() + 2 * s.omega_ltf.size() == 128);
    CHECK(std::is_sorted(s.omega_stf.begin(), s.omega_stf.end()));
}

TEST_CASE("frequency-domain training values") {
    const auto& sts = sts_frequency_values();
    const auto& lts = lts_frequency_values();
    const auto& s = subcarrier_sets();
    for (int k = -32; k < 32; ++k) {
        const auto b = static_cast<std::size_t>(bin_of(k));
        if (contains(s.zeta_stf, k)) {
            CHECK(std::abs(sts[b]) == doctest::Approx(std::sqrt(13.0 / 6.0) * std::sqrt(2.0)));
        } else {
            CHECK(std::abs(sts[b]) == 0.0);
        }
        CHECK(std::abs(lts[b]) == (contains(s.zeta_ltf, k) ? 1.0 : 0.0));
    }
    // a few 802.11a reference entries
    CHECK(lts[static_cast<std::size_t>(bin_of(-26))] == cd(1, 0));
    CHECK(lts[static_cast<std::size_t>(bin_of(-24))] == cd(-1, 0));
    CHECK(lts[static_cast<std::size_t>(bin_of(1))] == cd(1, 0));
    CHECK(lts[static_cast<std::size_t>(bin_of(26))] == cd(1, 0));
}

TEST_CASE("preamble structure") {
    const ComplexFrame p = generate_preamble(20e6);
    REQUIRE(p.size() == 320);
    CHECK(rms(p.view()) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < 144; ++i) CHECK(p[i] == p[i + 16]);
    for (std::size_t i = 192; i < 256; ++i) CHECK(p[i] == p[i + 64]);
    // GI2 is the tail of the long symbol
    for (std::size_t i = 0; i < 32; ++i) CHECK(p[kGi2Begin + i] == p[kLtf1Begin + 32 + i]);
}

TEST_CASE("ideal symbols have no energy on their inactive subcarriers") {
    const ComplexFrame p = generate_preamble();
    const auto& s = subcarrier_sets();
    CHECK(max_inactive(std::span<const cd>(p.samples).subspan(192, 64), s.omega_ltf) <= 1e-12);
    const auto sym = segment_symbols(p);
    CHECK(max_inactive(sym.stf1.view(), s.omega_stf) <= 1e-12);
    CHECK(max_inactive(sym.stf2.view(), s.omega_stf) <= 1e-12);
    CHECK(max_inactive(sym.ltf1.view(), s.omega_ltf) <= 1e-12);
    CHECK(max_inactive(sym.ltf2.view(), s.omega_ltf) <= 1e-12);
}

TEST_CASE("LTS time symbol matches the preamble") {
    const auto lts = lts_time_symbol();
    const ComplexFrame p = generate_preamble();
    REQUIRE(lts.size() == 64);
    for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(lts[i] - p[kLtf1Begin + i]) < 1e-15);
}

TEST_CASE("only 20 MHz is supported") {
    CHECK_THROWS_AS(generate_preamble(40e6), InvalidArgument);
}

TEST_CASE("segmentation") {
    const ComplexFrame p = generate_preamble();
    const auto s = segment_symbols(p);
    CHECK(s.stf1.size() == 64);
    CHECK(s.ltf2.size() == 64);
    CHECK(s.stf1.samples == s.stf2.samples);
    CHECK(s.ltf1.samples == s.ltf2.samples);

    // stitching the discarded pieces back reproduces the preamble
    std::vector<cd> rebuilt(p.samples.begin(), p.samples.begin() + 16);
    rebuilt.insert(rebuilt.end(), s.stf1.samples.begin(), s.stf1.samples.end());
    rebuilt.insert(rebuilt.end(), s.stf2.samples.begin(), s.stf2.samples.end());
    rebuilt.insert(rebuilt.end(), p.samples.begin() + 144, p.samples.begin() + 192);
    rebuilt.insert(rebuilt.end(), s.ltf1.samples.begin(), s.ltf1.samples.end());
    rebuilt.insert(rebuilt.end(), s.ltf2.samples.begin(), s.ltf2.samples.end());
    CHECK(rebuilt == p.samples);

    CHECK_THROWS_AS(segment_symbols(p.slice(0, 300)), InvalidArgument);
}
