#pragma once

// Slow, independent reference computations used only by the tests.

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "rffi/types.hpp"
#include "rffi/volterra.hpp"

namespace oracle {

using cd = std::complex<double>;

// O(N^2) DFT, X[k] = sum_n x[n] exp(-j 2 pi k n / N).
inline std::vector<cd> naive_dft(std::span<const cd> x) {
    const std::size_t n = x.size();
    std::vector<cd> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        cd acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
            acc += x[t] * std::polar(1.0, ang);
        }
        out[k] = acc;
    }
    return out;
}

// Nested loops straight over the flat coefficient arrays, orders 1..3.
// circular = true wraps negative time indices instead of zero-filling.
inline std::vector<cd> nested_volterra(const rffi::VolterraKernel& k, std::span<const cd> u, bool circular = false) {
    const int n = static_cast<int>(u.size());
    const int m = k.memory();
    auto at = [&](int t) -> cd {
        if (t >= 0) return u[static_cast<std::size_t>(t)];
        if (!circular) return 0.0;
        return u[static_cast<std::size_t>(((t % n) + n) % n)];
    };
    std::vector<cd> y(u.size(), 0.0);
    for (int t = 0; t < n; ++t) {
        cd acc = 0.0;
        if (k.dimension() >= 1) {
            const auto& a = k.order(1);
            for (int i = 0; i < m; ++i) acc += a[static_cast<std::size_t>(i)] * at(t - i);
        }
        if (k.dimension() >= 2) {
            const auto& a = k.order(2);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) acc += a[static_cast<std::size_t>(i * m + j)] * at(t - i) * at(t - j);
        }
        if (k.dimension() >= 3) {
            const auto& a = k.order(3);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j)
                    for (int l = 0; l < m; ++l)
                        acc += a[static_cast<std::size_t>((i * m + j) * m + l)] * at(t - i) * at(t - j) * at(t - l);
        }
        y[static_cast<std::size_t>(t)] = acc;
    }
    return y;
}

inline double norm2(std::span<const cd> x) {
    double s = 0.0;
    for (const cd& v : x) s += std::norm(v);
    return std::sqrt(s);
}

inline double rel_diff(std::span<const cd> a, std::span<const cd> b) {
    double num = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) num += std::norm(a[i] - b[i]);
    const double den = norm2(b);
    return std::sqrt(num) / (den > 0.0 ? den : 1.0);
}

}  // namespace oracle
