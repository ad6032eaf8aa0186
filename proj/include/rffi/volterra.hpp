#pragma once

// Baseband Volterra model of a transmitter power amplifier:
//
//   y(t) = sum_{d=1..D} sum_{m_1..m_d in [0,M)} alpha_d(m_1..m_d) prod_l u(t - m_l)
//
// Pure products of the complex envelope (no conjugate terms). Kernels are
// stored symmetrized so that the permutation multiplicity used by the 1-D
// convolution decomposition is well defined.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rffi/dsp.hpp"
#include "rffi/types.hpp"

namespace rffi {

class VolterraKernel {
public:
    /// alpha[d-1] holds the order-d coefficients, row-major with side M (size M^d).
    VolterraKernel(int memory, std::vector<std::vector<cd>> alpha);

    /// D = 1, M = 1, alpha_1(0) = 1.
    static VolterraKernel identity();

    int dimension() const { return static_cast<int>(alpha_.size()); }
    int memory() const { return memory_; }

    /// Flat coefficient array of order d (1-based).
    const std::vector<cd>& order(int d) const { return alpha_.at(static_cast<std::size_t>(d - 1)); }

    /// alpha_d(indices...), d = indices.size().
    cd at(std::span<const int> indices) const;

    bool operator==(const VolterraKernel&) const = default;

private:
    int memory_;
    std::vector<std::vector<cd>> alpha_;
};

/// Number of distinct orderings of the multiset {indices}: d! / prod(mult!).
std::int64_t permutation_multiplicity(std::span<const int> indices);

/// Direct evaluation of the nested sums; input is zero before t = 0. O(N M^D).
ComplexFrame volterra_time_bruteforce(const VolterraKernel& kernel, const ComplexFrame& input);

/// Same output through the change of coordinates m_1 = s, m_l = s + r_{l-1}:
/// a sum of 1-D convolutions of v_r(t) = u(t) prod u(t - r_l) with filters beta_r.
ComplexFrame volterra_time_1d(const VolterraKernel& kernel, const ComplexFrame& input);

/// Order-d component g_d(t) alone, via the 1-D decomposition.
ComplexFrame volterra_time_order(const VolterraKernel& kernel, const ComplexFrame& input, int d);

/// 64-point frequency-domain output S(w) = A_1 U + sum V_r B_r with circular
/// (DFT) semantics; equals DFT of the circularly-extended time-domain model.
Spectrum64 volterra_freq(const VolterraKernel& kernel, const ComplexFrame& symbol);

struct KernelScales {
    double memory_taps = 0.05;  // alpha_1(m), m >= 1
    double order2 = 0.01;
    double order3 = 0.005;
};

/// alpha_1(0) = 1; every other coefficient i.i.d. CN(0, sigma^2) at its order's scale.
VolterraKernel random_device_kernel(int dimension, int memory, std::uint64_t seed,
                                    const KernelScales& scales = {});

// ---- PA setup simulations ------------------------------------------------------

enum class PaSetup { Memory, Nonlinearity, Combined };

PaSetup parse_pa_setup(const std::string& name);
std::string to_string(PaSetup setup);

struct PaSetupBank {
    VolterraKernel memory;        // D = 1, M = 2
    VolterraKernel nonlinearity;  // D = 3, M = 1
    VolterraKernel combined;      // D = 3, M = 2

    const VolterraKernel& get(PaSetup setup) const;
};

/// Stand-in coefficients for the three setups (the reference values are not published).
PaSetupBank default_pa_setup_bank();

struct SetupSpectra {
    PaSetup setup;
    Spectrum64 stf;  // stf1 of the PA output
    Spectrum64 ltf;  // ltf1 of the PA output
};

/// Ideal preamble -> time-domain PA -> 64-point spectra of stf1 and ltf1.
SetupSpectra simulate_pa_setup(PaSetup setup, const PaSetupBank& bank);

/// Spectra of the undistorted preamble's stf1 / ltf1.
SetupSpectra ideal_spectra();

// ---- kernel bank serialization ------------------------------------------------

struct KernelBankEntry {
    std::string device_id;
    VolterraKernel kernel;
};

/// {device_id, D, M, alpha: [order1, order2, ...]}; order d is a d-deep nested
/// array of side M whose leaves are [re, im] pairs.
std::string kernel_to_json(const KernelBankEntry& entry);
KernelBankEntry kernel_from_json(const std::string& text);

void save_kernel_bank(const std::string& path, const std::vector<KernelBankEntry>& bank);
std::vector<KernelBankEntry> load_kernel_bank(const std::string& path);

}  // namespace rffi
