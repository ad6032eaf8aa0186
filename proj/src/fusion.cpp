#include "rffi/fusion.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "rffi/error.hpp"

namespace rffi {

namespace {

void check_input(const FusionInput& input, const CfoDatabase* db) {
    if (input.scores.empty()) throw InvalidArgument("fusion needs at least one antenna");
    const std::size_t classes = input.scores.front().size();
    for (const auto& s : input.scores)
        if (s.size() != classes) throw InvalidArgument("score vectors differ in length");
    if (db) {
        if (input.cfos_hz.size() != input.scores.size())
            throw InvalidArgument("need one CFO estimate per antenna");
        if (static_cast<int>(classes) != db->num_devices())
            throw InvalidArgument("score length " + std::to_string(classes) + " does not match CFO database with " +
                                  std::to_string(db->num_devices()) + " devices");
        if (static_cast<int>(input.scores.size()) > db->num_antennas())
            throw InvalidArgument("more antennas than the CFO database holds");
    }
}

std::vector<double> average(std::span<const SoftmaxScores> scores) {
    std::vector<double> acc(scores.front().size(), 0.0);
    for (const auto& s : scores)
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s[i];
    for (double& a : acc) a /= static_cast<double>(scores.size());
    return acc;
}

}  // namespace

FusionMode parse_fusion_mode(const std::string& name) {
    if (name == "direct") return FusionMode::Direct;
    if (name == "df") return FusionMode::DF;
    if (name == "hybrid") return FusionMode::Hybrid;
    if (name == "zeroing") return FusionMode::Zeroing;
    if (name == "zeroing_improved") return FusionMode::ZeroingImproved;
    throw InvalidArgument("unknown fusion mode '" + name + "'");
}

std::string to_string(FusionMode mode) {
    switch (mode) {
        case FusionMode::Direct: return "direct";
        case FusionMode::DF: return "df";
        case FusionMode::Hybrid: return "hybrid";
        case FusionMode::Zeroing: return "zeroing";
        case FusionMode::ZeroingImproved: return "zeroing_improved";
    }
    return "?";
}

CfoDatabase::CfoDatabase(std::vector<std::string> device_ids, std::vector<std::vector<double>> means,
                         std::vector<std::vector<int>> counts)
    : device_ids_(std::move(device_ids)), means_(std::move(means)), counts_(std::move(counts)) {
    if (means_.size() != device_ids_.size() || counts_.size() != device_ids_.size())
        throw InvalidArgument("CFO database: device count mismatch");
    for (std::size_t d = 0; d < means_.size(); ++d) {
        if (means_[d].size() != means_.front().size() || counts_[d].size() != means_[d].size())
            throw InvalidArgument("CFO database: antenna count mismatch for " + device_ids_[d]);
        for (int c : counts_[d])
            if (c < 1) throw InvalidArgument("CFO database: empty cell for " + device_ids_[d]);
    }
}

double CfoDatabase::mean(int device, int antenna) const {
    return means_.at(static_cast<std::size_t>(device)).at(static_cast<std::size_t>(antenna));
}

int CfoDatabase::count(int device, int antenna) const {
    return counts_.at(static_cast<std::size_t>(device)).at(static_cast<std::size_t>(antenna));
}

std::string CfoDatabase::to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (std::size_t d = 0; d < device_ids_.size(); ++d) j[device_ids_[d]] = means_[d];
    return j.dump(2);
}

CfoDatabase CfoDatabase::from_json(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("CFO database: ") + e.what());
    }
    if (!j.is_object() || j.empty()) throw FormatError("CFO database must be a non-empty object");
    std::vector<std::string> ids;
    std::vector<std::vector<double>> means;
    std::vector<std::vector<int>> counts;
    for (const auto& [id, arr] : j.items()) {
        if (!arr.is_array() || arr.empty()) throw FormatError("CFO database entry '" + id + "' is not a list");
        std::vector<double> m;
        for (const auto& v : arr) {
            if (!v.is_number()) throw FormatError("CFO database entry '" + id + "' holds a non-number");
            m.push_back(v.get<double>());
        }
        ids.push_back(id);
        counts.emplace_back(m.size(), 1);
        means.push_back(std::move(m));
    }
    try {
        return CfoDatabase(std::move(ids), std::move(means), std::move(counts));
    } catch (const InvalidArgument& e) {
        throw FormatError(e.what());
    }
}

CfoDatabase build_cfo_database(std::span<const CfoRecord> records, const std::vector<std::string>& device_ids,
                               int num_antennas) {
    const auto n = device_ids.size();
    if (n == 0 || num_antennas < 1) throw InvalidArgument("CFO database needs devices and antennas");
    std::vector<std::vector<double>> sums(n, std::vector<double>(static_cast<std::size_t>(num_antennas), 0.0));
    std::vector<std::vector<int>> counts(n, std::vector<int>(static_cast<std::size_t>(num_antennas), 0));
    for (const auto& r : records) {
        if (!r.device_label) throw InvalidArgument("CFO record without a device label");
        const int d = *r.device_label;
        if (d < 0 || d >= static_cast<int>(n)) throw InvalidArgument("CFO record label out of range");
        if (r.antenna_index < 0 || r.antenna_index >= num_antennas)
            throw InvalidArgument("CFO record antenna out of range");
        sums[static_cast<std::size_t>(d)][static_cast<std::size_t>(r.antenna_index)] += r.estimated_cfo_hz;
        counts[static_cast<std::size_t>(d)][static_cast<std::size_t>(r.antenna_index)] += 1;
    }
    for (std::size_t d = 0; d < n; ++d)
        for (int a = 0; a < num_antennas; ++a) {
            const int c = counts[d][static_cast<std::size_t>(a)];
            if (c == 0)
                throw InvalidArgument("no CFO records for device " + device_ids[d] + " antenna " + std::to_string(a));
            sums[d][static_cast<std::size_t>(a)] /= c;
        }
    return CfoDatabase(device_ids, std::move(sums), std::move(counts));
}

std::vector<double> cfo_weights(double cfo_hz, const CfoDatabase& db, int antenna_index, double floor_hz) {
    if (antenna_index < 0 || antenna_index >= db.num_antennas()) throw InvalidArgument("antenna index out of range");
    std::vector<double> w(static_cast<std::size_t>(db.num_devices()));
    for (int i = 0; i < db.num_devices(); ++i)
        w[static_cast<std::size_t>(i)] = 1.0 / std::max(std::abs(cfo_hz - db.mean(i, antenna_index)), floor_hz);
    return w;
}

int argmax(std::span<const double> v) {
    if (v.empty()) throw InvalidArgument("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return static_cast<int>(best);
}

int predict_direct(const SoftmaxScores& scores) { return argmax(scores); }

int fuse_df(std::span<const SoftmaxScores> scores) {
    if (scores.empty()) throw InvalidArgument("fusion needs at least one antenna");
    for (const auto& s : scores)
        if (s.size() != scores.front().size()) throw InvalidArgument("score vectors differ in length");
    return argmax(average(scores));
}

int fuse_hybrid(const FusionInput& input, const CfoDatabase& db, const FusionOptions& opts) {
    check_input(input, &db);
    std::vector<SoftmaxScores> modified(input.scores.size());
    for (std::size_t k = 0; k < input.scores.size(); ++k) {
        auto w = cfo_weights(input.cfos_hz[k], db, static_cast<int>(k), opts.weight_floor_hz);
        if (opts.normalize_weights) {
            double sum = 0.0;
            for (double x : w) sum += x;
            for (double& x : w) x /= sum;
        }
        modified[k].resize(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) modified[k][i] = w[i] * input.scores[k][i];
    }
    return argmax(average(modified));
}

std::optional<int> fuse_zeroing(const FusionInput& input, const CfoDatabase& db, double threshold_hz) {
    check_input(input, &db);
    std::vector<SoftmaxScores> kept = input.scores;
    for (std::size_t k = 0; k < kept.size(); ++k)
        for (std::size_t i = 0; i < kept[k].size(); ++i)
            if (std::abs(input.cfos_hz[k] - db.mean(static_cast<int>(i), static_cast<int>(k))) > threshold_hz)
                kept[k][i] = 0.0;
    const auto merged = average(kept);
    bool any = false;
    for (double v : merged) any = any || v != 0.0;
    if (!any) return std::nullopt;
    return argmax(merged);
}

int fuse_zeroing_improved(const FusionInput& input, const CfoDatabase& db, double threshold_hz) {
    if (auto label = fuse_zeroing(input, db, threshold_hz)) return *label;
    return fuse_df(input.scores);
}

std::optional<int> fuse(FusionMode mode, const FusionInput& input, const CfoDatabase& db, const FusionOptions& opts,
                        int direct_antenna) {
    switch (mode) {
        case FusionMode::Direct:
            if (direct_antenna < 0 || direct_antenna >= static_cast<int>(input.scores.size()))
                throw InvalidArgument("direct antenna out of range");
            return predict_direct(input.scores[static_cast<std::size_t>(direct_antenna)]);
        case FusionMode::DF: return fuse_df(input.scores);
        case FusionMode::Hybrid: return fuse_hybrid(input, db, opts);
        case FusionMode::Zeroing: return fuse_zeroing(input, db, opts.zeroing_threshold_hz);
        case FusionMode::ZeroingImproved: return fuse_zeroing_improved(input, db, opts.zeroing_threshold_hz);
    }
    throw InvalidArgument("unknown fusion mode");
}

std::string decision_log_csv(std::span<const DecisionLogRow> rows) {
    std::size_t antennas = 0;
    for (const auto& r : rows) antennas = std::max({antennas, r.antenna_argmax.size(), r.cfos_hz.size()});
    std::ostringstream os;
    os << "frame_id,true_label,mode,predicted_label";
    for (std::size_t k = 0; k < antennas; ++k) os << ",argmax_a" << k;
    for (std::size_t k = 0; k < antennas; ++k) os << ",cfo_hz_a" << k;
    os << '\n' << std::setprecision(10);
    for (const auto& r : rows) {
        os << r.frame_id << ',' << r.true_label << ',' << to_string(r.mode) << ',' << (r.predicted ? *r.predicted : -1);
        for (std::size_t k = 0; k < antennas; ++k)
            os << ',' << (k < r.antenna_argmax.size() ? std::to_string(r.antenna_argmax[k]) : "");
        for (std::size_t k = 0; k < antennas; ++k) {
            os << ',';
            if (k < r.cfos_hz.size()) os << r.cfos_hz[k];
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace rffi
