#include "rffi/features.hpp"

#include <cmath>

#include "rffi/dsp.hpp"
#include "rffi/error.hpp"
#include "rffi/impairments.hpp"

namespace rffi {

namespace {

struct SymbolSpectra {
    Spectrum64 stf1, stf2, ltf1, ltf2;
};

SymbolSpectra spectra(const PreambleSymbols& s) {
    return {dft64(s.stf1.view()), dft64(s.stf2.view()), dft64(s.ltf1.view()), dft64(s.ltf2.view())};
}

double magnitude(cd v, const FeatureOptions& opts) {
    const double m = std::abs(v);
    return opts.log_magnitude ? std::log(std::max(m, kLogFloor)) : m;
}

void append_band(std::vector<double>& out, const Spectrum64& spec, const std::vector<int>& subcarriers,
                 const FeatureOptions& opts) {
    for (int k : subcarriers) out.push_back(magnitude(spec[static_cast<std::size_t>(bin_of(k))], opts));
}

double safe_log(double v) { return std::log(std::max(v, kLogFloor)); }

}  // namespace

FeatureKind parse_feature_kind(const std::string& name) {
    if (name == "sr" || name == "SR") return FeatureKind::SR;
    if (name == "as" || name == "AS") return FeatureKind::AS;
    if (name == "dolos" || name == "DoLoS") return FeatureKind::DoLoS;
    if (name == "eq" || name == "EQ") return FeatureKind::EQ;
    if (name == "ud" || name == "sr_ud" || name == "UD") return FeatureKind::SR_UD;
    throw InvalidArgument("unknown feature kind: " + name);
}

std::string to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::SR: return "sr";
        case FeatureKind::AS: return "as";
        case FeatureKind::DoLoS: return "dolos";
        case FeatureKind::EQ: return "eq";
        case FeatureKind::SR_UD: return "ud";
    }
    return "?";
}

int feature_length(FeatureKind kind) { return kind == FeatureKind::DoLoS ? 64 : 128; }

RffFeature extract_sr(const PreambleSymbols& symbols, const FeatureOptions& opts) {
    const SubcarrierSets& sets = subcarrier_sets();
    const SymbolSpectra sp = spectra(symbols);
    RffFeature f{{}, FeatureKind::SR};
    f.values.reserve(128);
    append_band(f.values, sp.stf1, sets.omega_stf, opts);
    append_band(f.values, sp.stf2, sets.omega_stf, opts);
    append_band(f.values, sp.ltf1, sets.omega_ltf, opts);
    append_band(f.values, sp.ltf2, sets.omega_ltf, opts);
    return f;
}

RffFeature extract_as(const PreambleSymbols& symbols, const FeatureOptions& opts) {
    const SubcarrierSets& sets = subcarrier_sets();
    const SymbolSpectra sp = spectra(symbols);
    RffFeature f{{}, FeatureKind::AS};
    f.values.reserve(128);
    append_band(f.values, sp.stf1, sets.zeta_stf, opts);
    append_band(f.values, sp.stf2, sets.zeta_stf, opts);
    append_band(f.values, sp.ltf1, sets.zeta_ltf, opts);
    append_band(f.values, sp.ltf2, sets.zeta_ltf, opts);
    return f;
}

RffFeature extract_dolos(const PreambleSymbols& symbols) {
    const SubcarrierSets& sets = subcarrier_sets();
    const SymbolSpectra sp = spectra(symbols);
    RffFeature f{{}, FeatureKind::DoLoS};
    f.values.reserve(64);
    for (int k : sets.zeta_stf) {
        const auto b = static_cast<std::size_t>(bin_of(k));
        f.values.push_back(safe_log(std::abs(sp.stf1[b])) - safe_log(std::abs(sp.stf2[b])));
    }
    for (int k : sets.zeta_ltf) {
        const auto b = static_cast<std::size_t>(bin_of(k));
        f.values.push_back(safe_log(std::abs(sp.ltf1[b])) - safe_log(std::abs(sp.ltf2[b])));
    }
    return f;
}

EqualizedFeature extract_eq_detailed(const PreambleSymbols& symbols) {
    const SubcarrierSets& sets = subcarrier_sets();
    const SymbolSpectra sp = spectra(symbols);
    const Spectrum64& lts = lts_frequency_values();

    Spectrum64 h{};
    std::array<bool, kSymbolLength> faded{};
    EqualizedFeature out{{{}, FeatureKind::EQ}, {}};
    for (int k : sets.zeta_ltf) {
        const auto b = static_cast<std::size_t>(bin_of(k));
        h[b] = 0.5 * (sp.ltf1[b] + sp.ltf2[b]) / lts[b];
        if (std::abs(h[b]) < kDeepFade) {
            faded[b] = true;
            out.faded_subcarriers.push_back(k);
        }
    }
    auto band = [&](const Spectrum64& spec, const std::vector<int>& subcarriers) {
        for (int k : subcarriers) {
            const auto b = static_cast<std::size_t>(bin_of(k));
            out.feature.values.push_back(faded[b] ? 0.0 : std::abs(spec[b] / h[b]));
        }
    };
    out.feature.values.reserve(128);
    band(sp.stf1, sets.zeta_stf);
    band(sp.stf2, sets.zeta_stf);
    band(sp.ltf1, sets.zeta_ltf);
    band(sp.ltf2, sets.zeta_ltf);
    return out;
}

RffFeature extract_eq(const PreambleSymbols& symbols) { return extract_eq_detailed(symbols).feature; }

RffFeature ud_from_preprocessed(const Preprocessed& pre, const FeatureOptions& opts) {
    const ComplexFrame rotated = apply_cfo(pre.preamble, pre.cfo.estimated_cfo_hz);
    RffFeature f = extract_sr(segment_symbols(rotated), opts);
    f.kind = FeatureKind::SR_UD;
    return f;
}

RffFeature pipeline_ud(const ComplexFrame& stream, const FeatureOptions& opts) {
    return ud_from_preprocessed(preprocess(stream), opts);
}

RffFeature extract(FeatureKind kind, const Preprocessed& pre, const FeatureOptions& opts) {
    switch (kind) {
        case FeatureKind::SR: return extract_sr(pre.symbols, opts);
        case FeatureKind::AS: return extract_as(pre.symbols, opts);
        case FeatureKind::DoLoS: return extract_dolos(pre.symbols);
        case FeatureKind::EQ: return extract_eq(pre.symbols);
        case FeatureKind::SR_UD: return ud_from_preprocessed(pre, opts);
    }
    throw InvalidArgument("unknown feature kind");
}

}  // namespace rffi
