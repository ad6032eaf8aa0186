#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "oracles.hpp"
#include "rffi/error.hpp"
#include "rffi/preamble.hpp"
#include "rffi/volterra.hpp"

using namespace rffi;

namespace {

VolterraKernel random_kernel(int dim, int mem, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<cd>> alpha;
    std::size_t size = 1;
    for (int d = 1; d <= dim; ++d) {
        size *= static_cast<std::size_t>(mem);
        std::vector<cd> a(size);
        for (auto& v : a) v = complex_normal(rng, 1.0 / d);
        alpha.push_back(std::move(a));
    }
    return VolterraKernel(mem, std::move(alpha));
}

ComplexFrame random_frame(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<cd> x(n);
    for (auto& v : x) v = complex_normal(rng, 1.0);
    return ComplexFrame(std::move(x));
}

}  // namespace

TEST_CASE("identity kernel passes the input through") {
    const auto u = random_frame(64, 1);
    const auto y = volterra_time_bruteforce(VolterraKernel::identity(), u);
    CHECK(y.samples == u.samples);
    CHECK(volterra_time_1d(VolterraKernel::identity(), u).samples == u.samples);
}

TEST_CASE("memory kernel impulse response") {
    const VolterraKernel k(2, {{1.0, 0.1}});
    std::vector<cd> impulse(8, 0.0);
    impulse[0] = 1.0;
    const auto y = volterra_time_bruteforce(k, ComplexFrame(impulse));
    CHECK(y[0] == cd(1.0));
    CHECK(y[1] == cd(0.1));
    for (std::size_t i = 2; i < 8; ++i) CHECK(y[i] == cd(0.0));
}

TEST_CASE("kernels are symmetrized on construction") {
    const VolterraKernel k(2, {{1.0, 0.0}, {0.0, cd(2.0, 0.0), cd(0.0, 0.0), 0.0}});
    const int a[] = {0, 1};
    const int b[] = {1, 0};
    CHECK(k.at(a) == cd(1.0));
    CHECK(k.at(b) == cd(1.0));
}

TEST_CASE("kernel construction validates sizes") {
    CHECK_THROWS_AS(VolterraKernel(2, {{1.0}}), InvalidArgument);
    CHECK_THROWS_AS(VolterraKernel(0, {{}}), InvalidArgument);
    CHECK_THROWS_AS(VolterraKernel(1, {}), InvalidArgument);
}

TEST_CASE("brute force agrees with an independent nested-loop evaluation") {
    const auto bank = default_pa_setup_bank();
    const auto u = random_frame(64, 5);
    const auto ref = oracle::nested_volterra(bank.combined, u.view());
    const auto y = volterra_time_bruteforce(bank.combined, u);
    CHECK(oracle::rel_diff(y.view(), ref) < 1e-12);

    for (int trial = 0; trial < 20; ++trial) {
        const int dim = 1 + trial % 3;
        const int mem = 1 + (trial / 3) % 3;
        const auto k = random_kernel(dim, mem, 100 + static_cast<std::uint64_t>(trial));
        const auto x = random_frame(40, 200 + static_cast<std::uint64_t>(trial));
        CHECK(oracle::rel_diff(volterra_time_bruteforce(k, x).view(), oracle::nested_volterra(k, x.view())) < 1e-12);
    }
}

TEST_CASE("1-D decomposition matches the brute force") {
    for (int trial = 0; trial < 30; ++trial) {
        const int dim = 1 + trial % 3;
        const int mem = 1 + (trial / 3) % 3;
        const auto k = random_kernel(dim, mem, 300 + static_cast<std::uint64_t>(trial));
        const auto x = random_frame(64, 400 + static_cast<std::uint64_t>(trial));
        CHECK(oracle::rel_diff(volterra_time_1d(k, x).view(), volterra_time_bruteforce(k, x).view()) < 1e-10);
    }
}

TEST_CASE("D = 1 reduces to linear convolution") {
    const VolterraKernel k(3, {{cd(1.0, 0.2), cd(-0.3, 0.1), cd(0.05, 0.0)}});
    const auto x = random_frame(32, 9);
    const auto y = volterra_time_1d(k, x);
    for (std::size_t t = 0; t < 32; ++t) {
        cd acc = 0.0;
        for (std::size_t m = 0; m < 3 && m <= t; ++m) acc += k.order(1)[m] * x[t - m];
        CHECK(std::abs(y[t] - acc) < 1e-14);
    }
}

TEST_CASE("permutation multiplicity") {
    const int aa[] = {0, 0};
    const int ab[] = {0, 1};
    const int aab[] = {0, 0, 1};
    const int abc[] = {0, 1, 2};
    const int aaa[] = {1, 1, 1};
    CHECK(permutation_multiplicity(aa) == 1);
    CHECK(permutation_multiplicity(ab) == 2);
    CHECK(permutation_multiplicity(aab) == 3);
    CHECK(permutation_multiplicity(abc) == 6);
    CHECK(permutation_multiplicity(aaa) == 1);
}

TEST_CASE("order-d component is homogeneous of degree d") {
    const auto k = random_kernel(3, 2, 77);
    const auto u = random_frame(48, 78);
    const cd c(0.7, -1.3);
    ComplexFrame cu = u;
    for (auto& v : cu.samples) v *= c;
    for (int d = 1; d <= 3; ++d) {
        const auto g = volterra_time_order(k, u, d);
        const auto gc = volterra_time_order(k, cu, d);
        std::vector<cd> expect(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) expect[i] = std::pow(c, d) * g[i];
        CHECK(oracle::rel_diff(gc.view(), expect) < 1e-12);
    }
    // the orders add up to the full output
    std::vector<cd> sum(u.size(), 0.0);
    for (int d = 1; d <= 3; ++d) {
        const auto g = volterra_time_order(k, u, d);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[i];
    }
    CHECK(oracle::rel_diff(sum, volterra_time_bruteforce(k, u).view()) < 1e-12);
}

TEST_CASE("frequency-domain model") {
    const auto lts = ComplexFrame(lts_time_symbol());

    SUBCASE("identity kernel") {
        const auto s = volterra_freq(VolterraKernel::identity(), lts);
        const auto ref = oracle::naive_dft(lts.view());
        CHECK(oracle::rel_diff(std::span<const cd>(s), ref) < 1e-12);
    }
    SUBCASE("memory kernel leaves the inactive LTS bins empty") {
        const auto s = volterra_freq(VolterraKernel(2, {{1.0, 0.1}}), lts);
        for (int k : subcarrier_sets().omega_ltf) CHECK(std::abs(s[static_cast<std::size_t>(bin_of(k))]) < 1e-12);
    }
    SUBCASE("combined kernel equals the DFT of the circular time-domain output") {
        const auto bank = default_pa_setup_bank();
        const auto s = volterra_freq(bank.combined, lts);
        const auto ref = oracle::naive_dft(oracle::nested_volterra(bank.combined, lts.view(), true));
        CHECK(oracle::rel_diff(std::span<const cd>(s), ref) < 1e-9);
    }
    SUBCASE("random kernels") {
        for (int trial = 0; trial < 10; ++trial) {
            const auto k = random_kernel(1 + trial % 3, 1 + trial % 3, 500 + static_cast<std::uint64_t>(trial));
            const auto x = random_frame(64, 600 + static_cast<std::uint64_t>(trial));
            const auto ref = oracle::naive_dft(oracle::nested_volterra(k, x.view(), true));
            CHECK(oracle::rel_diff(std::span<const cd>(volterra_freq(k, x)), ref) < 1e-9);
        }
    }
    CHECK_THROWS_AS(volterra_freq(VolterraKernel::identity(), ComplexFrame(std::vector<cd>(32))), InvalidArgument);
}

TEST_CASE("memory, nonlinearity and combined PA setups") {
    const auto bank = default_pa_setup_bank();
    const auto& sets = subcarrier_sets();
    const auto mem = simulate_pa_setup(PaSetup::Memory, bank);
    const auto nl = simulate_pa_setup(PaSetup::Nonlinearity, bank);
    const auto comb = simulate_pa_setup(PaSetup::Combined, bank);

    double mem_inactive = 0.0;
    for (int k : sets.omega_ltf) mem_inactive = std::max(mem_inactive, std::abs(mem.ltf[static_cast<std::size_t>(bin_of(k))]));
    for (int k : sets.omega_stf) mem_inactive = std::max(mem_inactive, std::abs(mem.stf[static_cast<std::size_t>(bin_of(k))]));
    CHECK(mem_inactive <= 1e-10);

    for (int k = -32; k <= -27; ++k) {
        CHECK(std::abs(nl.ltf[static_cast<std::size_t>(bin_of(k))]) > 1e-4);
        CHECK(std::abs(comb.ltf[static_cast<std::size_t>(bin_of(k))]) > 1e-4);
    }

    double diff = 0.0, ref = 0.0;
    for (int k : sets.zeta_ltf) {
        const auto b = static_cast<std::size_t>(bin_of(k));
        diff += std::norm(comb.ltf[b] - mem.ltf[b]);
        ref += std::norm(mem.ltf[b]);
    }
    CHECK(std::sqrt(diff / ref) < 0.1);

    CHECK(parse_pa_setup("memory") == PaSetup::Memory);
    CHECK(parse_pa_setup("combined") == PaSetup::Combined);
    CHECK_THROWS_AS(parse_pa_setup("volterra"), InvalidArgument);
}

TEST_CASE("random device kernels") {
    const auto a = random_device_kernel(3, 2, 42);
    const auto b = random_device_kernel(3, 2, 42);
    const auto c = random_device_kernel(3, 2, 43);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    CHECK(a.dimension() == 3);
    CHECK(a.memory() == 2);
    CHECK(a.order(1)[0] == cd(1.0));
    const int ij[] = {0, 1};
    const int ji[] = {1, 0};
    CHECK(a.at(ij) == a.at(ji));
}

TEST_CASE("kernel JSON round trip") {
    const KernelBankEntry e{"devA", default_pa_setup_bank().combined};
    const auto back = kernel_from_json(kernel_to_json(e));
    CHECK(back.device_id == "devA");
    CHECK(back.kernel == e.kernel);
    CHECK_THROWS_AS(kernel_from_json("{\"device_id\": \"x\"}"), FormatError);
    CHECK_THROWS_AS(kernel_from_json("not json"), FormatError);

    const auto path = (std::filesystem::temp_directory_path() / "rffi_bank_test.json").string();
    save_kernel_bank(path, {e, {"devB", VolterraKernel::identity()}});
    const auto bank = load_kernel_bank(path);
    REQUIRE(bank.size() == 2);
    CHECK(bank[1].kernel == VolterraKernel::identity());
    std::filesystem::remove(path);
}
