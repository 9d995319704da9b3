#include <cmath>
#include <sstream>

#include "cascadekit/error.hpp"
#include "cascadekit/experiment.hpp"
#include "doctest.h"

using namespace casc;

namespace {

ExperimentConfig small_config() {
    auto c = default_experiment_config();
    c.data.n_train = 300;
    c.data.n_val = 300;
    c.data.n_test = 300;
    c.train.epochs = 3;
    c.train.decay_epochs = {2};
    c.w_grid = {1.0};
    c.c_sweep = {0.2, 0.8};
    c.w_sweep = {};
    return c;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("default config matches the benchmark shape") {
    const auto c = default_experiment_config();
    REQUIRE(c.stages.size() == 2);
    CHECK(c.stages[0].hidden == std::vector<int>{8});
    CHECK(c.stages[1].hidden == std::vector<int>{64, 64});
    CHECK(c.train.momentum == 0.9);
    CHECK(c.cost == 0.5);
    const auto back = experiment_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
}

TEST_CASE("config validation") {
    auto rejects = [](const char* text) {
        CHECK_THROWS_AS(experiment_config_from_json(nlohmann::json::parse(text)), ValidationError);
    };
    rejects(R"({"stages":[{"model_id":"a","hidden":[4]}]})");
    rejects(R"({"methods":["baseline","magic"]})");
    rejects(R"({"C":-0.5})");
    rejects(R"({"w":-1})");
    rejects(R"({"epsilon":1.5})");
    rejects(R"({"setting":"splitting","splitting":{"trunk":[4,4],"exits":[2,1]}})");
    rejects(R"({"setting":"splitting","splitting":{"trunk":[4,4],"exits":[1]}})");
    rejects(R"({"setting":"splitting","splitting":{"trunk":[4,4,4],"exits":[1,2]}})");
    rejects(R"({"setting":"sideways"})");
    rejects(R"({"train":{"epochs":"many"}})");
    CHECK_NOTHROW(experiment_config_from_json(
        nlohmann::json::parse(R"({"setting":"splitting","splitting":{"trunk":[4,4,4],"exits":[1,3]}})")));
}

TEST_CASE("mean and standard error") {
    const std::vector<double> one{3.0};
    const auto a = mean_se(one);
    CHECK(a.mean == 3.0);
    CHECK(a.se == 0.0);
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const auto b = mean_se(v);
    CHECK(b.mean == 2.5);
    CHECK(b.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0).epsilon(1e-14));
    CHECK(b.n == 4);
}

TEST_CASE("four-case histogram") {
    const std::vector<double> confs{0.05, 0.55, 0.95, 1.0, 0.5};
    const std::vector<std::uint8_t> fast{1, 1, 0, 0, 1}, exp{1, 0, 1, 0, 1};
    const auto h = four_case_histogram(confs, fast, exp, 10);
    CHECK(h.counts[0][0] == 1);
    CHECK(h.counts[0][5] == 1);
    CHECK(h.counts[1][5] == 1);
    CHECK(h.counts[2][9] == 1);
    CHECK(h.counts[3][9] == 1);
    std::size_t total = 0;
    for (const auto& c : h.counts) for (auto v : c) total += v;
    CHECK(total == 5);
    CHECK(std::string(to_string(Case::exp_only)) != std::string(to_string(Case::fast_only)));
}

TEST_CASE("run_experiment is deterministic and shares the expensive model") {
    const auto cfg = small_config();
    const auto a = run_experiment(cfg, 2);
    const auto b = run_experiment(cfg, 2);
    REQUIRE(a.outcomes.size() == b.outcomes.size());
    for (std::size_t i = 0; i < a.outcomes.size(); ++i) {
        CHECK(a.outcomes[i].test_acc == b.outcomes[i].test_acc);
        CHECK(a.outcomes[i].test_macs == b.outcomes[i].test_macs);
    }
    REQUIRE(a.summary.size() == 3);
    CHECK(a.summary[0].method == "baseline");
    CHECK(a.summary[2].method == "ltc");
    CHECK(a.c_sweep.size() == 2);
    for (std::size_t seed = 0; seed < 2; ++seed) {
        const MethodOutcome* base = nullptr;
        const MethodOutcome* ltc = nullptr;
        for (const auto& o : a.outcomes) {
            if (o.seed_index != seed) continue;
            if (o.method == "baseline") base = &o;
            if (o.method == "ltc") ltc = &o;
        }
        REQUIRE(base);
        REQUIRE(ltc);
        CHECK(base->stage_test_accuracy.back() == ltc->stage_test_accuracy.back());
        CHECK(base->temperatures == std::vector<double>(base->temperatures.size(), 1.0));
        std::size_t counted = 0;
        for (const auto& c : ltc->histogram.counts) for (auto v : c) counted += v;
        CHECK(counted == cfg.data.n_test);
    }
}

TEST_CASE("summary and sweep tables round trip through csv") {
    std::vector<SummaryRow> rows{{"baseline", {81.25, 0.5, 5}, {3016.5, 106.75, 5}, {0.5, 0.01, 5}},
                                 {"ltc", {81.5, 0.25, 5}, {2574.0, 99.0, 5}, {0.4, 0.02, 5}}};
    std::stringstream s;
    write_summary_csv(rows, s);
    const auto back = read_summary_csv(s);
    REQUIRE(back.size() == 2);
    CHECK(back[1].method == "ltc");
    CHECK(back[1].macs.mean == 2574.0);
    CHECK(back[0].acc.se == 0.5);
    CHECK(format_summary(back, {}) == format_summary(rows, {}));

    std::vector<ParamSweepRow> sweep{{"C", 0.1, {80.0, 0.1, 3}, {3000, 10, 3}, {0.5, 0.0, 3}}};
    std::stringstream p;
    write_param_sweep_csv(sweep, p);
    const auto sb = read_param_sweep_csv(p);
    REQUIRE(sb.size() == 1);
    CHECK(sb[0].value == 0.1);
    CHECK(format_param_sweep(sb) == format_param_sweep(sweep));
}

TEST_CASE("single-seed summaries omit the error columns") {
    std::vector<SummaryRow> rows{{"baseline", {81.0, 0.0, 1}, {3000, 0.0, 1}, {0.5, 0.0, 1}}};
    CHECK(format_summary(rows, {}).find("±") == std::string::npos);
    rows[0].acc.n = 2;
    rows[0].macs.n = 2;
    rows[0].n_exp_frac.n = 2;
    CHECK(format_summary(rows, {}).find("±") != std::string::npos);
}

}  // TEST_SUITE
