#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "oracles.hpp"
#include "rffi/dsp.hpp"
#include "rffi/error.hpp"

using namespace rffi;

namespace {

std::vector<cd> random_signal(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<cd> x(n);
    for (auto& v : x) v = complex_normal(rng, 1.0);
    return x;
}

}  // namespace

TEST_CASE("fft matches the O(N^2) DFT") {
    for (std::size_t n : {1u, 2u, 8u, 64u, 256u}) {
        auto x = random_signal(n, n);
        const auto ref = oracle::naive_dft(x);
        fft_inplace(x);
        CHECK(oracle::rel_diff(x, ref) < 1e-12);
    }
}

TEST_CASE("ifft undoes fft") {
    const auto x = random_signal(64, 7);
    auto y = x;
    fft_inplace(y);
    ifft_inplace(y);
    CHECK(oracle::rel_diff(y, x) < 1e-14);
}

TEST_CASE("fft rejects sizes that are not powers of two") {
    std::vector<cd> x(12);
    CHECK_THROWS_AS(fft_inplace(x), InvalidArgument);
}

TEST_CASE("dft64 of a 64-sample block") {
    const auto x = random_signal(64, 11);
    const auto ref = oracle::naive_dft(x);
    const Spectrum64 s = dft64(x);
    CHECK(oracle::rel_diff(std::span<const cd>(s), ref) < 1e-12);
    std::vector<cd> short_block(63);
    CHECK_THROWS_AS(dft64(short_block), InvalidArgument);
}

TEST_CASE("subcarrier to bin mapping") {
    CHECK(bin_of(0) == 0);
    CHECK(bin_of(1) == 1);
    CHECK(bin_of(-1) == 63);
    CHECK(bin_of(-32) == 32);
    CHECK(bin_of(31) == 31);
    for (int k = -32; k < 32; ++k) CHECK(subcarrier_of(bin_of(k)) == k);
}

TEST_CASE("derived seeds are deterministic and spread") {
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    std::set<std::uint64_t> seen;
    for (int a = 0; a < 50; ++a)
        for (int b = 0; b < 50; ++b) seen.insert(derive_seed(9, a, b));
    CHECK(seen.size() == 2500);
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}

TEST_CASE("complex_normal has the requested variance") {
    Rng rng(3);
    double p = 0.0;
    cd mean = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const cd z = complex_normal(rng, 2.5);
        p += std::norm(z);
        mean += z;
    }
    CHECK(p / n == doctest::Approx(2.5).epsilon(0.02));
    CHECK(std::abs(mean / static_cast<double>(n)) < 0.02);
}

TEST_CASE("ComplexFrame helpers") {
    ComplexFrame f(std::vector<cd>{1.0, cd(0, 2), -3.0});
    CHECK(mean_power(f.view()) == doctest::Approx(14.0 / 3.0));
    CHECK(rms(f.view()) == doctest::Approx(std::sqrt(14.0 / 3.0)));
    const auto s = f.slice(1, 2);
    CHECK(s.size() == 2);
    CHECK(s[0] == cd(0, 2));
    CHECK_THROWS_AS(f.slice(2, 2), InvalidArgument);
    CHECK_NOTHROW(f.validate());
    f[1] = cd(std::numeric_limits<double>::quiet_NaN(), 0);
    CHECK_THROWS_AS(f.validate(), InvalidArgument);
    CHECK_THROWS_AS(ComplexFrame().validate(), InvalidArgument);
}
