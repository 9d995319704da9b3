#include <cmath>
#include <random>

#include "cascadekit/error.hpp"
#include "cascadekit/ltc.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace casc;

namespace {

const CorrectnessPair kBoth{true, true}, kFastOnly{true, false}, kExpOnly{false, true}, kNeither{false, false};

long double conf_of(std::span<const double> z) {
    const auto p = oracle::softmax_ld(z);
    return p[static_cast<std::size_t>(oracle::argmax(z))];
}

// Loss with the argmax index fixed at `top`, in long double.
long double loss_at(std::vector<double> z, std::size_t top, CorrectnessPair pair, double cost) {
    const auto p = oracle::softmax_ld(z);
    const long double c = p[top];
    return c * (pair.fast_correct ? 0 : 1) + (1 - c) * ((pair.exp_correct ? 0 : 1) + cost);
}

}  // namespace

TEST_SUITE("ltc") {

TEST_CASE("per-sample loss examples") {
    CHECK(ltc_loss_sample(0.8, kBoth, 0.5) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(ltc_loss_sample(1.0, kExpOnly, 0.5) == 1.0);
    CHECK(ltc_loss_sample(0.0, kNeither, 0.5) == 1.5);
    for (double c : {0.0, 0.3, 2.0}) CHECK(ltc_loss_sample(1.0, kFastOnly, c) == 0.0);
}

TEST_CASE("gradient with respect to confidence") {
    CHECK(ltc_grad_conf(kExpOnly, 0.5) == 0.5);
    CHECK(ltc_grad_conf(kFastOnly, 0.5) == -1.5);
    CHECK(ltc_grad_conf(kBoth, 0.5) == -0.5);
    CHECK(ltc_grad_conf(kNeither, 0.5) == -0.5);
}

TEST_CASE("loss is non-negative and affine in conf with the gradient as slope") {
    for (auto pair : {kBoth, kFastOnly, kExpOnly, kNeither})
        for (double cost : {0.0, 0.25, 0.5, 0.9, 1.7}) {
            const double slope = ltc_grad_conf(pair, cost);
            const double base = ltc_loss_sample(0.0, pair, cost);
            for (int k = 0; k <= 20; ++k) {
                const double conf = k / 20.0;
                const double v = ltc_loss_sample(conf, pair, cost);
                CHECK(v >= 0.0);
                CHECK(v == doctest::Approx(base + slope * conf).epsilon(1e-14));
            }
            if (cost > 0.0 && cost < 1.0) {
                const bool prefers_low = ltc_loss_sample(0.0, pair, cost) < ltc_loss_sample(1.0, pair, cost);
                CHECK(prefers_low == (!pair.fast_correct && pair.exp_correct));
            }
        }
}

TEST_CASE("batch loss is the mean") {
    const std::vector<double> confs{0.8, 1.0, 0.0, 1.0};
    const std::vector<CorrectnessPair> pairs{kBoth, kExpOnly, kNeither, kFastOnly};
    CHECK(ltc_loss_batch(confs, pairs, 0.5) == doctest::Approx((0.1 + 1.0 + 1.5 + 0.0) / 4).epsilon(1e-15));
    const std::vector<CorrectnessPair> short_pairs{kBoth};
    CHECK_THROWS_AS(ltc_loss_batch(confs, short_pairs, 0.5), ValidationError);
}

TEST_CASE("correctness pairs come from the argmax") {
    const std::vector<double> fast{0.1, 2.0, 0.3}, exp{5.0, 0.0, 0.0};
    const auto p = CorrectnessPair::from_logits(fast, exp, 1);
    CHECK(p.fast_correct);
    CHECK_FALSE(p.exp_correct);
}

TEST_CASE("logit gradient, K=2 example") {
    const std::vector<double> z{0.0, 0.0};
    const auto g = grad_wrt_logits(z, kBoth, 0.5);
    REQUIRE(g.size() == 2);
    CHECK(g[0] == doctest::Approx(-0.125).epsilon(1e-15));
    CHECK(g[1] == doctest::Approx(0.125).epsilon(1e-15));
}

TEST_CASE("logit gradient sums to zero and matches central differences") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss(0.0, 2.0);
    const CorrectnessPair pairs[] = {kBoth, kFastOnly, kExpOnly, kNeither};
    int checked = 0;
    for (int t = 0; t < 200; ++t) {
        const int k = 2 + static_cast<int>(rng() % 9);
        std::vector<double> z(static_cast<std::size_t>(k));
        for (auto& v : z) v = gauss(rng);
        std::vector<double> sorted = z;
        std::sort(sorted.rbegin(), sorted.rend());
        if (sorted[0] - sorted[1] < 1e-2) continue;
        const auto pair = pairs[t % 4];
        const double cost = 0.1 + 0.2 * (t % 5);
        const auto g = grad_wrt_logits(z, pair, cost);
        double sum = 0.0, norm = 0.0;
        for (double v : g) sum += v, norm += std::abs(v);
        CHECK(std::abs(sum) <= 1e-14 + 1e-12 * norm);
        const auto top = static_cast<std::size_t>(oracle::argmax(z));
        for (std::size_t j = 0; j < z.size(); ++j) {
            const double h = 1e-5;
            auto up = z, down = z;
            up[j] += h;
            down[j] -= h;
            const long double fd = (loss_at(up, top, pair, cost) - loss_at(down, top, pair, cost)) / (2 * h);
            const double scale = std::max(std::abs(static_cast<double>(fd)), 1e-6);
            CHECK(std::abs(g[j] - static_cast<double>(fd)) / scale <= 1e-5);
        }
        ++checked;
        // loss value through accumulate_ltc_grad
        std::vector<double> acc(z.size(), 0.0);
        const double loss = accumulate_ltc_grad(z, pair, cost, 2.0, acc);
        CHECK(loss == doctest::Approx(static_cast<double>(loss_at(z, top, pair, cost))).epsilon(1e-12));
        for (std::size_t j = 0; j < z.size(); ++j) CHECK(acc[j] == doctest::Approx(2.0 * g[j]).epsilon(1e-14));
        CHECK(static_cast<double>(conf_of(z)) > 0.0);
    }
    CHECK(checked > 100);
}

TEST_CASE("joint loss") {
    const auto b = joint_loss(2.0, 0.4, 1.0);
    CHECK(b.total == doctest::Approx(2.4).epsilon(1e-15));
    CHECK(joint_loss(1.3, 0.7, 0.0).total == 1.3);
    const double a1 = joint_loss(1.0, 0.3, 1.0).total, a2 = joint_loss(1.0, 0.3, 2.0).total,
                 a3 = joint_loss(1.0, 0.3, 3.0).total;
    CHECK(a3 - a2 == doctest::Approx(a2 - a1).epsilon(1e-14));
    CHECK_THROWS_AS(joint_loss(1.0, 0.3, -1.0), ValidationError);
}

TEST_CASE("cascading schedule") {
    const std::vector<ModelProfile> two{ModelProfile("fast", 1.0), ModelProfile("exp", 10.0)};
    const auto s2 = cascading_schedule(two);
    REQUIRE(s2.size() == 2);
    CHECK(s2[0].stage == 1);
    CHECK(s2[0].loss == StageLoss::original);
    CHECK(s2[1].stage == 0);
    CHECK(s2[1].loss == StageLoss::joint);
    CHECK(s2[1].partner == 1);

    const std::vector<ModelProfile> three{ModelProfile("a", 1.0), ModelProfile("b", 5.0), ModelProfile("c", 25.0)};
    const auto s3 = cascading_schedule(three);
    REQUIRE(s3.size() == 3);
    CHECK(s3[0].stage == 2);
    CHECK(s3[1].stage == 1);
    CHECK(s3[1].partner == 2);
    CHECK(s3[2].stage == 0);
    CHECK(s3[2].partner == 1);

    const std::vector<ModelProfile> one{ModelProfile("a", 1.0)};
    CHECK_THROWS_AS(cascading_schedule(one), ValidationError);
}

TEST_CASE("splitting loss") {
    const std::vector<double> org2{1.2, 0.7}, casc1{0.4};
    CHECK(splitting_loss(org2, casc1, 0.5) == doctest::Approx(1.2 + 0.5 * 0.4 + 0.7).epsilon(1e-15));
    CHECK(splitting_loss(org2, casc1, 0.0) == doctest::Approx(1.9).epsilon(1e-15));
    const std::vector<double> org3{1, 1, 1}, casc2{0.2, 0.3};
    CHECK(splitting_loss(org3, casc2, 2.0) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK_THROWS_AS(splitting_loss(org3, casc1, 1.0), ValidationError);
}

TEST_CASE("cost warnings flag C above 1") {
    CHECK(cost_warnings(0.0).empty());
    CHECK(cost_warnings(0.5).empty());
    CHECK(cost_warnings(1.0).empty());
    CHECK(cost_warnings(1.2).size() == 1);
}

TEST_CASE("pairwise sum is exact on small integers") {
    std::vector<double> v;
    for (int i = 1; i <= 1000; ++i) v.push_back(i);
    CHECK(pairwise_sum(v) == 500500.0);
    CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
}

}  // TEST_SUITE
