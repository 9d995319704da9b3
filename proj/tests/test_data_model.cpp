#include <random>
#include <sstream>

#include "cascadekit/data_model.hpp"
#include "cascadekit/error.hpp"
#include "cascadekit/io.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace casc;

TEST_SUITE("data_model") {

TEST_CASE("three-row table loads with N=3, K=2") {
    TempDir dir;
    spit(dir / "m.csv", "sample_id,label,logit_0,logit_1\na,0,1.5,-2\nb,1,0,0.25\nc,1,3,4\n");
    const auto t = load_logit_table(dir / "m.csv");
    CHECK(t.size() == 3);
    CHECK(t.num_classes() == 2);
    CHECK(t.model_id() == "m");
    CHECK(t.sample_id(1) == "b");
    CHECK(t.label(2) == 1);
    CHECK(t.logits(0)[1] == -2.0);
}

TEST_CASE("label out of range names the data row") {
    TempDir dir;
    spit(dir / "m.csv", "sample_id,label,logit_0,logit_1,logit_2\na,0,1,2,3\nb,5,1,2,3\n");
    try {
        load_logit_table(dir / "m.csv");
        FAIL("expected an error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()) == "label out of range, row 2");
        CHECK(e.row() == 2);
    }
}

TEST_CASE("malformed inputs are rejected") {
    TempDir dir;
    auto rejects = [&](const std::string& text) {
        spit(dir / "bad.csv", text);
        CHECK_THROWS_AS(load_logit_table(dir / "bad.csv"), ValidationError);
    };
    rejects("");
    rejects("id,label,logit_0\na,0,1\n");
    rejects("sample_id,label,logit_1\na,0,1\n");
    rejects("sample_id,label,logit_0,logit_1\na,0,1\n");
    rejects("sample_id,label,logit_0\na,0,nan\n");
    rejects("sample_id,label,logit_0\na,0,inf\n");
    rejects("sample_id,label,logit_0\na,0,1\na,0,2\n");
    rejects("sample_id,label,logit_0\na,x,1\n");
    rejects("sample_id,label,logit_0\na,-1,1\n");
    rejects("sample_id,label,logit_0\n,0,1\n");
    CHECK_THROWS_AS(load_logit_table(dir / "missing.csv"), ValidationError);
}

TEST_CASE("duplicate id reports its row") {
    TempDir dir;
    spit(dir / "m.csv", "sample_id,label,logit_0\na,0,1\nb,0,1\na,0,2\n");
    try {
        load_logit_table(dir / "m.csv");
        FAIL("expected an error");
    } catch (const FormatError& e) {
        CHECK(e.row() == 3);
    }
}

TEST_CASE("constructor enforces invariants") {
    CHECK_THROWS_AS(LogitTable("m", 0, {}), ValidationError);
    CHECK_THROWS_AS(LogitTable("m", 2, {{"a", 0, {1.0}}}), ValidationError);
    CHECK_THROWS_AS(LogitTable("m", 2, {{"a", 2, {1.0, 2.0}}}), ValidationError);
    CHECK_THROWS_AS(LogitTable("m", 2, {{"a,b", 0, {1.0, 2.0}}}), ValidationError);
    CHECK_THROWS_AS(LogitTable("m", 1, {{"a", 0, {std::numeric_limits<double>::quiet_NaN()}}}), ValidationError);
    CHECK_NOTHROW(LogitTable("m", 2, {}));
}

TEST_CASE("write(load(p)) is byte-identical for canonical files") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss(0.0, 5.0);
    std::uniform_int_distribution<int> kdist(1, 12), ndist(0, 60);
    std::uniform_real_distribution<double> expo(-300.0, 300.0);
    TempDir dir;
    for (int trial = 0; trial < 40; ++trial) {
        const int k = kdist(rng);
        const int n = ndist(rng);
        std::vector<LogitRow> rows;
        for (int i = 0; i < n; ++i) {
            LogitRow r{"id-" + std::to_string(trial) + "-" + std::to_string(i), static_cast<int>(rng() % static_cast<unsigned>(k)), {}};
            for (int j = 0; j < k; ++j) {
                double v = gauss(rng);
                if (j % 5 == 4) v = std::ldexp(v, static_cast<int>(expo(rng)));
                if (j % 7 == 6) v = -0.0;
                r.logits.push_back(v);
            }
            rows.push_back(std::move(r));
        }
        const LogitTable original("m", k, rows);
        std::ostringstream first;
        write_logit_table(original, first);
        spit(dir / "m.csv", first.str());
        const auto loaded = load_logit_table(dir / "m.csv");
        CHECK(loaded.values() == original.values());
        CHECK(loaded.labels() == original.labels());
        CHECK(loaded.sample_ids() == original.sample_ids());
        std::ostringstream second;
        write_logit_table(loaded, second);
        CHECK(second.str() == first.str());
    }
}

TEST_CASE("serialized reals keep at least 9 significant digits") {
    const LogitTable t("m", 1, {{"a", 0, {0.123456789123}}, {"b", 0, {1.0 / 3.0}}});
    std::ostringstream s;
    write_logit_table(t, s);
    CHECK(s.str().find("0.123456789123") != std::string::npos);
    CHECK(s.str().find("0.3333333333333333") != std::string::npos);
    CHECK(format_real(0.1) == "0.1");
}

TEST_CASE("CRLF and blank lines are tolerated") {
    TempDir dir;
    spit(dir / "m.csv", "sample_id,label,logit_0,logit_1\r\na,0,1,2\r\n\r\nb,1,3,4\r\n");
    const auto t = load_logit_table(dir / "m.csv");
    CHECK(t.size() == 2);
    CHECK(t.logits(1)[1] == 4.0);
}

TEST_CASE("model profile validation") {
    CHECK_NOTHROW(ModelProfile("fast", 67.6e6, 0.67));
    CHECK_THROWS_AS(ModelProfile("x", -1.0), ValidationError);
    CHECK_THROWS_AS(ModelProfile("x", std::numeric_limits<double>::infinity()), ValidationError);
    CHECK_THROWS_AS(ModelProfile("x", 1.0, 1.5), ValidationError);
    CHECK_FALSE(ModelProfile("x", 1.0).standalone_accuracy().has_value());
}

TEST_CASE("validate_spec defaults") {
    const auto raw = nlohmann::json::parse(R"({"stages":[{"model_id":"a","macs":1},{"model_id":"b","macs":10}]})");
    const auto spec = validate_spec(raw);
    CHECK(spec.cost == 0.5);
    CHECK(spec.tolerance == 0.0);
    CHECK(spec.thresholds == std::vector<double>{1.0});
    CHECK(spec.scoring == ScoreMethod::max_prob);
    CHECK(spec.policy == ThresholdPolicy::max_accuracy);
    CHECK_FALSE(spec.loss_weight.has_value());
    CHECK(spec.warnings.empty());
}

TEST_CASE("validate_spec errors") {
    auto err = [](const char* text) {
        try {
            validate_spec(nlohmann::json::parse(text));
        } catch (const ValidationError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(err(R"({"stages":[{"model_id":"a","macs":1}]})").find("at least 2 stages") != std::string::npos);
    CHECK(err(R"({"stages":[{"model_id":"a","macs":1},{"model_id":"b","macs":2}],"thresholds":[0.1,0.2]})")
              .find("threshold count mismatch") != std::string::npos);
    CHECK(err(R"({"stages":[{"model_id":"a","macs":1},{"model_id":"b","macs":2}],"C":-1})").find("C") != std::string::npos);
    CHECK(err(R"({"stages":[{"model_id":"a","macs":1},{"model_id":"b","macs":2}],"w":-0.1})").find("w") != std::string::npos);
    CHECK(err(R"({"stages":[{"model_id":"a","macs":1},{"model_id":"b","macs":2}],"epsilon":2})") != "no error");
    CHECK(err(R"({"stages":[{"model_id":"a","macs":1},{"model_id":"b","macs":2}],"thresholds":[1.5]})") != "no error");
    CHECK(err(R"({"stages":[{"model_id":"a","macs":1},{"model_id":"b"}]})") != "no error");
    CHECK(err(R"({"stages":[{"model_id":"a","macs":1},{"model_id":"b","macs":2}],"scoring":"entropy"})") != "no error");
    CHECK(err(R"([1,2])") != "no error");
}

TEST_CASE("C above 1 is accepted with a warning") {
    const auto spec = validate_spec(
        nlohmann::json::parse(R"({"stages":[{"model_id":"a","macs":1},{"model_id":"b","macs":2}],"C":1.5,"w":2})"));
    CHECK(spec.warnings.size() == 1);
    CHECK(spec.loss_weight == doctest::Approx(2.0));
}

TEST_CASE("join aligns on sample_id and rejects mismatches") {
    const LogitTable a("a", 2, {{"x", 0, {1, 0}}, {"y", 1, {0, 1}}});
    const LogitTable b("b", 2, {{"y", 1, {0, 2}}, {"x", 0, {2, 0}}});
    const auto j = join_tables({a, b});
    CHECK(j.size() == 2);
    CHECK(j.stages[1].sample_id(0) == "x");
    CHECK(j.stages[1].logits(0)[0] == 2.0);

    const LogitTable missing("c", 2, {{"x", 0, {1, 0}}});
    CHECK_THROWS_AS(join_tables({a, missing}), ValidationError);
    const LogitTable extra("d", 2, {{"x", 0, {1, 0}}, {"z", 1, {0, 1}}});
    CHECK_THROWS_AS(join_tables({a, extra}), ValidationError);
    const LogitTable relabeled("e", 2, {{"x", 1, {1, 0}}, {"y", 1, {0, 1}}});
    CHECK_THROWS_AS(join_tables({a, relabeled}), ValidationError);
}

TEST_CASE("staged outputs publish all files or none") {
    TempDir dir;
    {
        StagedOutputs s;
        s.add(dir / "sub" / "a.txt", "A");
        s.add(dir / "b.txt", "B");
        CHECK_FALSE(std::filesystem::exists(dir / "b.txt"));
    }
    CHECK(count_entries(dir.path) == 0);
    {
        StagedOutputs s;
        s.add(dir / "sub" / "a.txt", "A");
        s.add(dir / "b.txt", "B");
        s.commit();
    }
    CHECK(slurp(dir / "sub" / "a.txt") == "A");
    CHECK(slurp(dir / "b.txt") == "B");
}

TEST_CASE("atomic write replaces content") {
    TempDir dir;
    write_file_atomic(dir / "f.txt", "one");
    write_file_atomic(dir / "f.txt", "two");
    CHECK(slurp(dir / "f.txt") == "two");
    CHECK(count_entries(dir.path) == 1);
}

}  // TEST_SUITE
