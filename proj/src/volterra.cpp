#include "rffi/volterra.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "rffi/error.hpp"
#include "rffi/preamble.hpp"

namespace rffi {

namespace {

using json = nlohmann::json;

std::size_t ipow(std::size_t base, int exp) {
    std::size_t r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

// Digits of a flat row-major index (m_1 most significant).
void decode(std::size_t flat, int memory, std::span<int> digits) {
    for (std::size_t l = digits.size(); l-- > 0;) {
        digits[l] = static_cast<int>(flat % static_cast<std::size_t>(memory));
        flat /= static_cast<std::size_t>(memory);
    }
}

std::size_t encode(std::span<const int> digits, int memory) {
    std::size_t flat = 0;
    for (int d : digits) flat = flat * static_cast<std::size_t>(memory) + static_cast<std::size_t>(d);
    return flat;
}

std::vector<cd> symmetrize(const std::vector<cd>& coeffs, int memory, int order) {
    std::map<std::size_t, std::pair<cd, int>> classes;
    std::vector<int> digits(static_cast<std::size_t>(order));
    std::vector<std::size_t> canon(coeffs.size());
    for (std::size_t f = 0; f < coeffs.size(); ++f) {
        decode(f, memory, digits);
        std::sort(digits.begin(), digits.end());
        canon[f] = encode(digits, memory);
        auto& [sum, count] = classes[canon[f]];
        sum += coeffs[f];
        ++count;
    }
    std::vector<cd> out(coeffs.size());
    for (std::size_t f = 0; f < coeffs.size(); ++f) {
        const auto& [sum, count] = classes[canon[f]];
        out[f] = sum / static_cast<double>(count);
    }
    return out;
}

// Visit every nondecreasing tuple 0 <= r_1 <= ... <= r_len <= M-1.
template <typename F>
void for_each_sorted_tuple(int len, int memory, F&& fn) {
    std::vector<int> r(static_cast<std::size_t>(len), 0);
    if (len == 0) {
        fn(std::span<const int>(r));
        return;
    }
    while (true) {
        fn(std::span<const int>(r));
        int pos = len - 1;
        while (pos >= 0 && r[static_cast<std::size_t>(pos)] == memory - 1) --pos;
        if (pos < 0) return;
        const int next = r[static_cast<std::size_t>(pos)] + 1;
        for (int q = pos; q < len; ++q) r[static_cast<std::size_t>(q)] = next;
    }
}

// beta_r(s) = C(0, r) alpha_d(s, s + r_1, ..., s + r_{d-1}), s in [0, M-1-r_{d-1}].
std::vector<cd> beta_filter(const VolterraKernel& kernel, int d, std::span<const int> r) {
    const int memory = kernel.memory();
    const int last = r.empty() ? 0 : r.back();
    std::vector<int> idx(static_cast<std::size_t>(d));
    idx[0] = 0;
    for (int l = 1; l < d; ++l) idx[static_cast<std::size_t>(l)] = r[static_cast<std::size_t>(l - 1)];
    const double mult = static_cast<double>(permutation_multiplicity(idx));
    std::vector<cd> beta(static_cast<std::size_t>(memory - last));
    for (int s = 0; s < memory - last; ++s) {
        idx[0] = s;
        for (int l = 1; l < d; ++l) idx[static_cast<std::size_t>(l)] = s + r[static_cast<std::size_t>(l - 1)];
        beta[static_cast<std::size_t>(s)] = mult * kernel.at(idx);
    }
    return beta;
}

void accumulate_order_1d(const VolterraKernel& kernel, std::span<const cd> u, int d, std::span<cd> out) {
    const auto n = static_cast<std::ptrdiff_t>(u.size());
    auto sample = [&](std::ptrdiff_t t) { return t >= 0 ? u[static_cast<std::size_t>(t)] : cd{}; };
    std::vector<cd> v(u.size());
    for_each_sorted_tuple(d - 1, kernel.memory(), [&](std::span<const int> r) {
        for (std::ptrdiff_t t = 0; t < n; ++t) {
            cd p = u[static_cast<std::size_t>(t)];
            for (int rl : r) p *= sample(t - rl);
            v[static_cast<std::size_t>(t)] = p;
        }
        const std::vector<cd> beta = beta_filter(kernel, d, r);
        for (std::ptrdiff_t t = 0; t < n; ++t) {
            cd acc{};
            for (std::size_t s = 0; s < beta.size(); ++s) {
                const std::ptrdiff_t ts = t - static_cast<std::ptrdiff_t>(s);
                if (ts < 0) break;
                acc += beta[s] * v[static_cast<std::size_t>(ts)];
            }
            out[static_cast<std::size_t>(t)] += acc;
        }
    });
}

void check_input(const VolterraKernel& kernel, const ComplexFrame& input) {
    if (input.size() < static_cast<std::size_t>(kernel.memory())) {
        throw InvalidArgument("input shorter than kernel memory");
    }
}

}  // namespace

VolterraKernel::VolterraKernel(int memory, std::vector<std::vector<cd>> alpha) : memory_(memory) {
    if (memory < 1) throw InvalidArgument("kernel memory must be >= 1");
    if (alpha.empty()) throw InvalidArgument("kernel needs at least order 1");
    alpha_.reserve(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        const int order = static_cast<int>(i) + 1;
        if (alpha[i].size() != ipow(static_cast<std::size_t>(memory), order)) {
            std::ostringstream os;
            os << "order-" << order << " kernel must have M^" << order << " coefficients";
            throw InvalidArgument(os.str());
        }
        alpha_.push_back(order == 1 ? std::move(alpha[i]) : symmetrize(alpha[i], memory, order));
    }
}

VolterraKernel VolterraKernel::identity() { return VolterraKernel(1, {{cd{1.0, 0.0}}}); }

cd VolterraKernel::at(std::span<const int> indices) const {
    return order(static_cast<int>(indices.size()))[encode(indices, memory_)];
}

std::int64_t permutation_multiplicity(std::span<const int> indices) {
    std::vector<int> sorted(indices.begin(), indices.end());
    std::sort(sorted.begin(), sorted.end());
    std::int64_t result = 1;
    // d! / prod(mult!) built incrementally to stay exact.
    std::int64_t seen = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        for (std::size_t k = 1; k <= j - i; ++k) {
            ++seen;
            result = result * seen / static_cast<std::int64_t>(k);
        }
        i = j;
    }
    return result;
}

ComplexFrame volterra_time_bruteforce(const VolterraKernel& kernel, const ComplexFrame& input) {
    check_input(kernel, input);
    const std::span<const cd> u = input.view();
    const auto n = static_cast<std::ptrdiff_t>(u.size());
    const int memory = kernel.memory();
    std::vector<cd> out(u.size());
    std::vector<int> digits;
    for (int d = 1; d <= kernel.dimension(); ++d) {
        const std::vector<cd>& a = kernel.order(d);
        digits.assign(static_cast<std::size_t>(d), 0);
        for (std::ptrdiff_t t = 0; t < n; ++t) {
            cd acc{};
            for (std::size_t f = 0; f < a.size(); ++f) {
                decode(f, memory, digits);
                cd p = a[f];
                for (int m : digits) {
                    const std::ptrdiff_t ti = t - m;
                    if (ti < 0) {
                        p = 0.0;
                        break;
                    }
                    p *= u[static_cast<std::size_t>(ti)];
                }
                acc += p;
            }
            out[static_cast<std::size_t>(t)] += acc;
        }
    }
    return ComplexFrame(std::move(out), input.sample_rate_hz);
}

ComplexFrame volterra_time_order(const VolterraKernel& kernel, const ComplexFrame& input, int d) {
    check_input(kernel, input);
    if (d < 1 || d > kernel.dimension()) throw InvalidArgument("order out of range");
    std::vector<cd> out(input.size());
    accumulate_order_1d(kernel, input.view(), d, out);
    return ComplexFrame(std::move(out), input.sample_rate_hz);
}

ComplexFrame volterra_time_1d(const VolterraKernel& kernel, const ComplexFrame& input) {
    check_input(kernel, input);
    std::vector<cd> out(input.size());
    for (int d = 1; d <= kernel.dimension(); ++d) accumulate_order_1d(kernel, input.view(), d, out);
    return ComplexFrame(std::move(out), input.sample_rate_hz);
}

Spectrum64 volterra_freq(const VolterraKernel& kernel, const ComplexFrame& symbol) {
    if (symbol.size() != kSymbolLength) throw InvalidArgument("volterra_freq expects a 64-sample symbol");
    if (kernel.memory() > kSymbolLength) throw InvalidArgument("kernel memory exceeds symbol length");
    constexpr int n = kSymbolLength;
    const std::span<const cd> u = symbol.view();
    auto circ = [&](int t) { return u[static_cast<std::size_t>(((t % n) + n) % n)]; };

    auto padded_dft = [](std::span<const cd> taps) {
        std::vector<cd> buf(n);
        std::copy(taps.begin(), taps.end(), buf.begin());
        return dft64(buf);
    };

    const Spectrum64 big_u = dft64(u);
    const Spectrum64 a1 = padded_dft(kernel.order(1));
    Spectrum64 s{};
    for (int k = 0; k < n; ++k) s[static_cast<std::size_t>(k)] = a1[static_cast<std::size_t>(k)] * big_u[static_cast<std::size_t>(k)];

    std::vector<cd> v(n);
    for (int d = 2; d <= kernel.dimension(); ++d) {
        for_each_sorted_tuple(d - 1, kernel.memory(), [&](std::span<const int> r) {
            for (int t = 0; t < n; ++t) {
                cd p = u[static_cast<std::size_t>(t)];
                for (int rl : r) p *= circ(t - rl);
                v[static_cast<std::size_t>(t)] = p;
            }
            const Spectrum64 big_v = dft64(v);
            const Spectrum64 big_b = padded_dft(beta_filter(kernel, d, r));
            for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) s[k] += big_v[k] * big_b[k];
        });
    }
    return s;
}

VolterraKernel random_device_kernel(int dimension, int memory, std::uint64_t seed, const KernelScales& scales) {
    if (dimension < 1 || memory < 1) throw InvalidArgument("kernel dimension and memory must be >= 1");
    Rng rng(derive_seed(seed, 0x504aULL));
    std::vector<std::vector<cd>> alpha;
    for (int d = 1; d <= dimension; ++d) {
        const std::size_t count = ipow(static_cast<std::size_t>(memory), d);
        const double sigma = d == 1 ? scales.memory_taps : d == 2 ? scales.order2 : scales.order3;
        std::vector<cd> coeffs(count);
        for (std::size_t f = 0; f < count; ++f) coeffs[f] = complex_normal(rng, sigma * sigma);
        if (d == 1) coeffs[0] = 1.0;
        alpha.push_back(std::move(coeffs));
    }
    return VolterraKernel(memory, std::move(alpha));
}

PaSetup parse_pa_setup(const std::string& name) {
    if (name == "memory") return PaSetup::Memory;
    if (name == "nonlinearity") return PaSetup::Nonlinearity;
    if (name == "combined") return PaSetup::Combined;
    throw InvalidArgument("unknown PA setup: " + name);
}

std::string to_string(PaSetup setup) {
    switch (setup) {
        case PaSetup::Memory: return "memory";
        case PaSetup::Nonlinearity: return "nonlinearity";
        case PaSetup::Combined: return "combined";
    }
    return "?";
}

const VolterraKernel& PaSetupBank::get(PaSetup setup) const {
    switch (setup) {
        case PaSetup::Memory: return memory;
        case PaSetup::Nonlinearity: return nonlinearity;
        case PaSetup::Combined: return combined;
    }
    throw InvalidArgument("unknown PA setup");
}

PaSetupBank default_pa_setup_bank() {
    const std::vector<cd> a1_mem = {1.0, cd{0.1, 0.0}};
    const cd a2{0.02, 0.01};
    const cd a3{-0.03, 0.01};
    VolterraKernel memory(2, {a1_mem});
    VolterraKernel nonlinearity(1, {{1.0}, {a2}, {a3}});
    // Combined: memory taps of the first setup, nonlinear terms concentrated on
    // the diagonal with weaker cross-memory products.
    std::vector<cd> a2c = {a2, cd{0.004, -0.002}, cd{0.004, -0.002}, cd{0.002, 0.001}};
    std::vector<cd> a3c(8, cd{-0.002, 0.001});
    a3c[0] = a3;
    a3c[7] = cd{-0.004, 0.0};
    VolterraKernel combined(2, {a1_mem, a2c, a3c});
    return PaSetupBank{std::move(memory), std::move(nonlinearity), std::move(combined)};
}

namespace {

SetupSpectra spectra_of(PaSetup setup, const ComplexFrame& pa_out) {
    const PreambleSymbols sym = segment_symbols(pa_out);
    return SetupSpectra{setup, dft64(sym.stf1.view()), dft64(sym.ltf1.view())};
}

}  // namespace

SetupSpectra simulate_pa_setup(PaSetup setup, const PaSetupBank& bank) {
    return spectra_of(setup, volterra_time_1d(bank.get(setup), generate_preamble()));
}

SetupSpectra ideal_spectra() { return spectra_of(PaSetup::Memory, generate_preamble()); }

// ---- JSON ----------------------------------------------------------------------

namespace {

json nest(const std::vector<cd>& flat, std::size_t offset, std::size_t stride, int depth, int memory) {
    json arr = json::array();
    if (depth == 1) {
        for (int m = 0; m < memory; ++m) {
            const cd v = flat[offset + static_cast<std::size_t>(m)];
            arr.push_back(json::array({v.real(), v.imag()}));
        }
        return arr;
    }
    const std::size_t sub = stride / static_cast<std::size_t>(memory);
    for (int m = 0; m < memory; ++m) arr.push_back(nest(flat, offset + static_cast<std::size_t>(m) * sub, sub, depth - 1, memory));
    return arr;
}

void unnest(const json& j, int depth, int memory, std::vector<cd>& out) {
    if (!j.is_array() || static_cast<int>(j.size()) != memory) throw FormatError("kernel array has wrong side length");
    for (const json& e : j) {
        if (depth == 1) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
                throw FormatError("kernel leaf must be a [re, im] pair");
            }
            out.emplace_back(e[0].get<double>(), e[1].get<double>());
        } else {
            unnest(e, depth - 1, memory, out);
        }
    }
}

json entry_to_json(const KernelBankEntry& entry) {
    const VolterraKernel& k = entry.kernel;
    json alpha = json::array();
    for (int d = 1; d <= k.dimension(); ++d) alpha.push_back(nest(k.order(d), 0, ipow(static_cast<std::size_t>(k.memory()), d), d, k.memory()));
    return json{{"device_id", entry.device_id}, {"D", k.dimension()}, {"M", k.memory()}, {"alpha", alpha}};
}

KernelBankEntry entry_from_json(const json& j) {
    try {
        const int dimension = j.at("D").get<int>();
        const int memory = j.at("M").get<int>();
        const json& alpha = j.at("alpha");
        if (dimension < 1 || memory < 1 || !alpha.is_array() || static_cast<int>(alpha.size()) != dimension) {
            throw FormatError("kernel header inconsistent with alpha");
        }
        std::vector<std::vector<cd>> coeffs;
        for (int d = 1; d <= dimension; ++d) {
            std::vector<cd> flat;
            unnest(alpha[static_cast<std::size_t>(d - 1)], d, memory, flat);
            coeffs.push_back(std::move(flat));
        }
        return KernelBankEntry{j.at("device_id").get<std::string>(), VolterraKernel(memory, std::move(coeffs))};
    } catch (const json::exception& e) {
        throw FormatError(std::string("kernel JSON: ") + e.what());
    }
}

}  // namespace

std::string kernel_to_json(const KernelBankEntry& entry) { return entry_to_json(entry).dump(); }

KernelBankEntry kernel_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("kernel JSON: ") + e.what());
    }
    return entry_from_json(j);
}

void save_kernel_bank(const std::string& path, const std::vector<KernelBankEntry>& bank) {
    json arr = json::array();
    for (const auto& e : bank) arr.push_back(entry_to_json(e));
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << arr.dump(1) << '\n';
}

std::vector<KernelBankEntry> load_kernel_bank(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    json arr;
    try {
        in >> arr;
    } catch (const json::exception& e) {
        throw FormatError(std::string("kernel bank: ") + e.what());
    }
    if (!arr.is_array()) throw FormatError("kernel bank must be a JSON array");
    std::vector<KernelBankEntry> bank;
    for (const json& j : arr) bank.push_back(entry_from_json(j));
    return bank;
}

}  // namespace rffi
