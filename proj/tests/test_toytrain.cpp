#include <cmath>
#include <sstream>

#include "cascadekit/error.hpp"
#include "cascadekit/io.hpp"
#include "cascadekit/synthetic.hpp"
#include "cascadekit/toynet.hpp"
#include "cascadekit/train.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace casc;

namespace {

double accuracy(const ToyNet& net, const FeatureTable& data) {
    const auto c = correctness(net, data);
    double s = 0;
    for (auto v : c) s += v;
    return s / static_cast<double>(c.size());
}

std::string dump(const FeatureTable& t) {
    std::ostringstream s;
    write_feature_table(t, s);
    return s.str();
}

TrainConfig quick(int epochs, std::uint64_t seed) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 64;
    c.learning_rate = 0.05;
    c.decay_epochs = {};
    c.seed = seed;
    return c;
}

}  // namespace

TEST_SUITE("toytrain") {

TEST_CASE("synthetic data is deterministic per seed") {
    SyntheticSpec s;
    s.n_train = 300;
    s.n_val = 100;
    s.n_test = 100;
    s.clusters_per_class = 2;
    const auto a = gen_synthetic(s), b = gen_synthetic(s);
    CHECK(dump(a.train) == dump(b.train));
    CHECK(dump(a.val) == dump(b.val));
    CHECK(dump(a.test) == dump(b.test));
    s.seed = 1;
    CHECK(dump(gen_synthetic(s).train) != dump(a.train));
    CHECK(a.train.sample_ids[0] != a.val.sample_ids[0]);
    SyntheticSpec bad;
    bad.separation = 0.0;
    CHECK_THROWS_AS(gen_synthetic(bad), ValidationError);
}

TEST_CASE("well separated blobs are learned almost perfectly") {
    SyntheticSpec s;
    s.num_classes = 4;
    s.dim = 2;
    s.separation = 100.0;
    s.n_train = 800;
    s.n_val = 100;
    s.n_test = 2000;
    const auto data = gen_synthetic(s);
    auto cfg = quick(20, 3);
    cfg.learning_rate = 0.01;
    const auto r = train(ToyNet::mlp(2, {8}, 4, 3), data.train, cfg);
    CHECK(accuracy(r.net, data.test) > 0.99);
}

TEST_CASE("indistinguishable classes give chance accuracy") {
    SyntheticSpec s;
    s.num_classes = 4;
    s.dim = 2;
    s.separation = 1e-6;
    s.n_train = 2000;
    s.n_val = 100;
    s.n_test = 10000;
    const auto data = gen_synthetic(s);
    const auto r = train(ToyNet::mlp(2, {8}, 4, 1), data.train, quick(5, 1));
    CHECK(std::abs(accuracy(r.net, data.test) - 0.25) <= 0.05);
}

TEST_CASE("MACs counting") {
    const auto net = ToyNet::mlp(2, {8}, 4, 0);
    CHECK(net.layer_sizes() == std::vector<int>{2, 8, 4});
    CHECK(count_macs(net).total == 48);
    CHECK(count_macs(ToyNet::mlp(8, {8}, 8, 0)).total == 128);
    CHECK(count_macs(ToyNet::mlp(8, {64, 64}, 8, 0)).total == 5120);

    const auto single = ToyNet::multi_exit(3, {6, 5}, {2}, 4, 0);
    const auto two = ToyNet::multi_exit(3, {6, 5}, {1, 2}, 4, 0);
    CHECK(count_macs(single).trunk == count_macs(two).trunk);
    const auto m = count_macs(two);
    REQUIRE(m.per_exit_cumulative.size() == 2);
    CHECK(m.per_exit_cumulative[0] == 3 * 6 + 6 * 4);
    CHECK(m.per_exit_cumulative[1] == 3 * 6 + 6 * 4 + 6 * 5 + 5 * 4);
    CHECK(m.per_exit_cumulative[1] > m.per_exit_cumulative[0]);
    CHECK(m.total == m.per_exit_cumulative[1]);
}

TEST_CASE("multiply-add count of a naive forward equals macs().total") {
    std::mt19937_64 rng(2);
    for (const auto& net : {ToyNet::mlp(4, {7, 3}, 5, 1), ToyNet::multi_exit(4, {7, 6, 3}, {1, 3}, 5, 2),
                            ToyNet::multi_exit(2, {3, 4, 5, 6}, {1, 2, 3, 4}, 3, 3)}) {
        std::vector<double> x(static_cast<std::size_t>(net.input_dim()), 0.5);
        const auto f = oracle::naive_forward(net, x);
        CHECK(f.multiply_adds == count_macs(net).total);
        CHECK(f.exit_logits.size() == net.num_exits());
    }
    CHECK(rng() != 0);
}

TEST_CASE("multi-exit forward equals the independent prefix networks") {
    const auto net = ToyNet::multi_exit(3, {5, 4, 6}, {1, 3}, 4, 9);
    Eigen::MatrixXd batch = Eigen::MatrixXd::Random(3, 17);
    const auto all = forward(net, batch);
    REQUIRE(all.size() == 2);
    CHECK(all[0].rows() == 4);
    CHECK(all[0].cols() == 17);
    for (Eigen::Index i = 0; i < batch.cols(); ++i) {
        const std::vector<double> x(batch.col(i).data(), batch.col(i).data() + 3);
        const auto ref = oracle::naive_forward(net, x);
        for (std::size_t e = 0; e < 2; ++e)
            for (int j = 0; j < 4; ++j)
                CHECK(all[e](j, i) == doctest::Approx(ref.exit_logits[e][static_cast<std::size_t>(j)]).epsilon(1e-12));
    }
    // Prefix network: a single-exit net carrying the same trunk layer and head.
    auto prefix = ToyNet::mlp(3, {5}, 4, 0);
    prefix.weights(prefix.trunk()[0]) = net.weights(net.trunk()[0]);
    prefix.bias(prefix.trunk()[0]) = net.bias(net.trunk()[0]);
    prefix.weights(prefix.exits()[0].layer) = net.weights(net.exits()[0].layer);
    prefix.bias(prefix.exits()[0].layer) = net.bias(net.exits()[0].layer);
    const auto p = forward(prefix, batch);
    CHECK((p[0] - all[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero weights give a uniform softmax; wrong input dimension throws") {
    auto net = ToyNet::mlp(3, {4}, 5, 1);
    for (auto& v : net.params()) v = 0.0;
    Eigen::MatrixXd batch = Eigen::MatrixXd::Random(3, 4);
    const auto z = forward(net, batch);
    CHECK(z[0].cwiseAbs().maxCoeff() == 0.0);
    Eigen::MatrixXd wrong = Eigen::MatrixXd::Random(2, 4);
    CHECK_THROWS_AS(forward(net, wrong), ValidationError);
}

TEST_CASE("analytic gradients match central differences for all loss variants") {
    for (auto kind : {oracle::FrozenLossSpec::org_only, oracle::FrozenLossSpec::cascading,
                      oracle::FrozenLossSpec::splitting}) {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const auto r = gradcheck::check(kind, seed, 20);
            CHECK(r.points == 20);
            CHECK(r.worst_rel < 1e-4);
        }
    }
}

TEST_CASE("ltc with w = 0 reproduces org_only training bit for bit") {
    SyntheticSpec s;
    s.n_train = 400;
    s.n_val = 10;
    s.n_test = 10;
    const auto data = gen_synthetic(s);
    const std::vector<std::uint8_t> exp_correct(data.train.size(), 1);
    auto cfg = quick(4, 5);
    const auto base = train(ToyNet::mlp(s.dim, {8}, s.num_classes, 5), data.train, cfg);
    cfg.objective = {LossKind::ltc, 0.0, 0.5};
    const auto ltc = train(ToyNet::mlp(s.dim, {8}, s.num_classes, 5), data.train, cfg, exp_correct);
    const auto a = base.net.params(), b = ltc.net.params();
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));

    const auto me = ToyNet::multi_exit(s.dim, {8, 16}, {1, 2}, s.num_classes, 5);
    auto mcfg = quick(3, 5);
    const auto mbase = train(me, data.train, mcfg);
    mcfg.objective = {LossKind::ltc, 0.0, 0.5};
    const auto mltc = train(me, data.train, mcfg);
    const auto c = mbase.net.params(), d = mltc.net.params();
    CHECK(std::equal(c.begin(), c.end(), d.begin(), d.end()));
}

TEST_CASE("one plain SGD step moves parameters by -lr * gradient") {
    SyntheticSpec s;
    s.n_train = 50;
    s.n_val = 10;
    s.n_test = 10;
    const auto data = gen_synthetic(s);
    const auto net = ToyNet::mlp(s.dim, {6}, s.num_classes, 2);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 50;
    cfg.learning_rate = 1e-6;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    cfg.decay_epochs = {};
    const auto r = train(net, data.train, cfg);
    std::vector<double> grad(net.param_count());
    loss_and_gradient(net, feature_matrix(data.train), data.train.labels, {}, cfg.objective, grad);
    for (std::size_t p = 0; p < grad.size(); ++p) {
        const double step = r.net.params()[p] - net.params()[p];
        CHECK(step == doctest::Approx(-cfg.learning_rate * grad[p]).epsilon(1e-6).scale(1e-15));
    }
}

TEST_CASE("org_only training drives cross-entropy down on separable data") {
    SyntheticSpec s;
    s.num_classes = 3;
    s.dim = 2;
    s.separation = 30.0;
    s.n_train = 600;
    s.n_val = 10;
    s.n_test = 10;
    const auto data = gen_synthetic(s);
    auto cfg = quick(40, 4);
    cfg.learning_rate = 0.02;
    cfg.weight_decay = 0.0;
    const auto r = train(ToyNet::mlp(2, {8}, 3, 4), data.train, cfg);
    REQUIRE(r.history.size() == 40);
    CHECK(r.history.front().epoch == 1);
    const auto terms = loss_and_gradient(r.net, feature_matrix(data.train), data.train.labels, {}, cfg.objective, {});
    CHECK(terms.total < 0.05);
    CHECK(r.history.back().total < r.history.front().total);
}

TEST_CASE("cascading ltc requires expensive correctness") {
    SyntheticSpec s;
    s.n_train = 40;
    s.n_val = 10;
    s.n_test = 10;
    const auto data = gen_synthetic(s);
    auto cfg = quick(1, 0);
    cfg.objective = {LossKind::ltc, 1.0, 0.5};
    CHECK_THROWS_AS(train(ToyNet::mlp(s.dim, {4}, s.num_classes, 0), data.train, cfg), ValidationError);
    auto bad = quick(1, 0);
    bad.momentum = 1.0;
    CHECK_THROWS_AS(train(ToyNet::mlp(s.dim, {4}, s.num_classes, 0), data.train, bad), ValidationError);
}

TEST_CASE("training is deterministic per seed") {
    SyntheticSpec s;
    s.n_train = 200;
    s.n_val = 10;
    s.n_test = 10;
    const auto data = gen_synthetic(s);
    const auto a = train(ToyNet::mlp(s.dim, {8}, s.num_classes, 7), data.train, quick(3, 7));
    const auto b = train(ToyNet::mlp(s.dim, {8}, s.num_classes, 7), data.train, quick(3, 7));
    CHECK(fingerprint(a.net) == fingerprint(b.net));
    const auto c = train(ToyNet::mlp(s.dim, {8}, s.num_classes, 7), data.train, quick(3, 8));
    CHECK(fingerprint(a.net) != fingerprint(c.net));
}

TEST_CASE("correctness cache keys on weights and data") {
    SyntheticSpec s;
    s.n_train = 60;
    s.n_val = 30;
    s.n_test = 10;
    const auto data = gen_synthetic(s);
    auto net = ToyNet::mlp(s.dim, {4}, s.num_classes, 1);
    CorrectnessCache cache;
    const auto first = cache.get(net, data.train);
    CHECK(cache.get(net, data.train) == first);
    CHECK(cache.hits() == 1);
    cache.get(net, data.val);
    CHECK(cache.size() == 2);
    net.params()[0] += 1.0;
    cache.get(net, data.train);
    CHECK(cache.size() == 3);
    CHECK(cache.hits() == 1);
}

TEST_CASE("nets round trip through their text form") {
    TempDir dir;
    const auto net = ToyNet::multi_exit(3, {5, 4}, {1, 2}, 6, 11);
    save_toynet(net, dir / "net.json");
    const auto back = load_toynet(dir / "net.json");
    CHECK(fingerprint(back) == fingerprint(net));
    CHECK(back.layer_sizes() == net.layer_sizes());
    spit(dir / "bad.json", R"({"format":"something-else"})");
    CHECK_THROWS_AS(load_toynet(dir / "bad.json"), ValidationError);
}

TEST_CASE("exported logits align with the data") {
    SyntheticSpec s;
    s.n_train = 20;
    s.n_val = 10;
    s.n_test = 10;
    const auto data = gen_synthetic(s);
    const auto net = ToyNet::multi_exit(s.dim, {5, 4}, {1, 2}, s.num_classes, 3);
    const auto t = export_logits(net, data.val, "m", 0);
    CHECK(t.size() == data.val.size());
    CHECK(t.sample_ids() == data.val.sample_ids);
    CHECK(export_all_logits(net, data.val, "m").size() == 2);
    CHECK_THROWS_AS(export_logits(net, data.val, "m", 2), ValidationError);
}

}  // TEST_SUITE
