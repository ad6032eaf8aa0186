#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "rffi/error.hpp"
#include "rffi/harness.hpp"

using namespace rffi;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.scenario.num_devices = 3;
    c.scenario.train_frames = 24;
    c.scenario.test_frames = 12;
    c.tests = {{"L1", ChannelKind::LosRician, false, false}, {"M", ChannelKind::NlosRayleigh, true, false}};
    c.model.conv_channels = {8, 8, 16, 16};
    c.model.fc_hidden = 32;
    c.train.epochs = 2;
    c.seed = 3;
    return c;
}

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST_CASE("confusion matrix") {
    const std::vector<int> t{0, 1, 2, 2};
    const auto m = confusion_matrix(t, t, 3);
    CHECK(m == std::vector<std::vector<int>>{{1, 0, 0}, {0, 1, 0}, {0, 0, 2}});
    const std::vector<int> all0{0, 0, 0, 0};
    const auto c = confusion_matrix(all0, t, 3);
    CHECK(c[2][0] == 2);
    CHECK(c[1][0] == 1);
    CHECK_THROWS_AS(confusion_matrix(std::vector<int>{}, std::vector<int>{}, 3), InvalidArgument);
    CHECK_THROWS_AS(confusion_matrix(all0, std::vector<int>{0, 1}, 3), InvalidArgument);
    CHECK_THROWS_AS(confusion_matrix(std::vector<int>{0, 3, 0, 0}, t, 3), InvalidArgument);
}

TEST_CASE("CFO alone separates identical transmitters") {
    ExperimentConfig c;
    c.scenario.num_devices = 2;
    c.scenario.kernel_dimension = 1;
    c.scenario.kernel_memory = 1;
    c.scenario.train_frames = 32;
    c.scenario.test_frames = 32;
    c.features = {FeatureKind::SR};
    c.modes = {FusionMode::Direct, FusionMode::Hybrid};
    c.tests = {{"M", ChannelKind::NlosRayleigh, true, false}};
    c.model.conv_channels = {8, 8, 16, 16};
    c.model.fc_hidden = 32;
    c.train.epochs = 3;
    c.seed = 11;
    const auto pop = build_population(c.scenario);
    REQUIRE(std::abs(pop[0].nominal_cfo_hz - pop[1].nominal_cfo_hz) > 2e3);
    const auto r = run_experiment(c);
    const double hybrid = r.find("sr", "M", "hybrid")->accuracy;
    const double direct = r.find("sr", "M", "direct")->accuracy;
    MESSAGE("hybrid " << hybrid << " direct " << direct);
    CHECK(hybrid > direct);
    CHECK(hybrid > 0.95);
}

TEST_CASE("experiment report is deterministic and consistent") {
    auto c = small_config();
    const auto dir = fs::temp_directory_path() / "rffi_test_harness";
    fs::remove_all(dir);
    c.output_dir = dir.string();
    const auto a = run_experiment(c);
    c.output_dir.clear();
    const auto b = run_experiment(c);
    CHECK(report_json(a) == report_json(b));
    CHECK(a.config_hash == config_hash(c));
    for (const char* f : {"report.json", "report.csv", "cfo_db.json", "train_log_sr.csv", "decisions_sr_L1.csv"})
        CHECK(fs::exists(dir / f));
    fs::remove_all(dir);

    for (const auto& e : a.entries) {
        std::size_t trace = 0, sum = 0;
        for (std::size_t d = 0; d < e.confusion.size(); ++d) {
            int row = e.rejected[d];
            for (int v : e.confusion[d]) row += v;
            CHECK(row == e.device_totals[d]);
            trace += static_cast<std::size_t>(e.confusion[d][d]);
            sum += static_cast<std::size_t>(e.device_totals[d]);
        }
        CHECK(trace == e.correct);
        CHECK(sum == e.total);
        CHECK(e.accuracy == doctest::Approx(static_cast<double>(e.correct) / static_cast<double>(e.total)));
    }
    CHECK(a.find("sr", "M", "zeroing") != nullptr);
    CHECK(a.find("sr", "M", "nope") == nullptr);
}

TEST_CASE("train and test channels never overlap") {
    auto c = small_config();
    const auto data = simulate(c);
    CHECK(data.train.records.size() == 3u * 4u * 24u * 2u);
    REQUIRE(data.tests.size() == 2);
    CHECK(data.tests[0].first == "L1");
    // simulate throws on a shared channel seed; a second call is identical
    const auto again = simulate(c, false);
    CHECK(encode_feature_dataset(again.train) == encode_feature_dataset(data.train));
}

TEST_CASE("config JSON") {
    const auto c = small_config();
    const auto j = to_json(c);
    const auto back = experiment_from_json(nlohmann::json::parse(j.dump()));
    CHECK(config_hash(back) == config_hash(c));

    auto bad = nlohmann::json::parse(j.dump());
    bad["surprise"] = 1;
    CHECK_THROWS_AS(experiment_from_json(bad), InvalidArgument);
    auto bad_scen = nlohmann::json::parse(j.dump());
    bad_scen["scenario"]["snr"] = 3;
    CHECK_THROWS_AS(experiment_from_json(bad_scen), InvalidArgument);

    auto other = c;
    other.seed = 4;
    CHECK(config_hash(other) != config_hash(c));
    other = c;
    other.output_dir = "/x";
    CHECK(config_hash(other) == config_hash(c));
    CHECK_THROWS_AS(load_experiment_config("/nonexistent.json"), Error);
}

TEST_CASE("spectrum dump") {
    const auto ltf = lines_of(spectra_csv(true));
    REQUIRE(ltf.size() == 65);
    CHECK(ltf[0] == "index,ideal,memory,nonlinearity,combined");
    for (int k = -32; k < 32; ++k) {
        std::istringstream row(ltf[static_cast<std::size_t>(k + 33)]);
        std::string cell;
        std::vector<double> v;
        std::getline(row, cell, ',');
        CHECK(std::stoi(cell) == k);
        while (std::getline(row, cell, ',')) v.push_back(std::stod(cell));
        REQUIRE(v.size() == 4);
        const bool inactive = k < -26 || k > 26 || k == 0;
        if (inactive) {
            CHECK(v[0] < 1e-10);
            CHECK(v[1] < 1e-10);
        }
        if (k <= -27) {
            CHECK(v[2] > 1e-4);
            CHECK(v[3] > 1e-4);
        }
    }
    CHECK(lines_of(spectra_csv(false)).size() == 65);
}
