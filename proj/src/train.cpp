#include "cascadekit/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cascadekit/confidence.hpp"
#include "cascadekit/error.hpp"
#include "cascadekit/ltc.hpp"

namespace casc {

namespace {

// Mean cross-entropy of one exit; writes (softmax - onehot) / n into dz.
double cross_entropy(const Eigen::MatrixXd& z, std::span<const int> labels, Eigen::MatrixXd* dz) {
    const Eigen::Index n = z.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> terms(static_cast<std::size_t>(n));
    if (dz) dz->resize(z.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto col = z.col(i);
        const double hi = col.maxCoeff();
        const Eigen::VectorXd e = (col.array() - hi).exp();
        const double sum = e.sum();
        const int y = labels[static_cast<std::size_t>(i)];
        terms[static_cast<std::size_t>(i)] = std::log(sum) - (col(y) - hi);
        if (dz) {
            dz->col(i) = e / sum;
            (*dz)(y, i) -= 1.0;
            dz->col(i) *= inv_n;
        }
    }
    return pairwise_sum(terms) * inv_n;
}

// Mean L_casc of one fast exit; accumulates w/n times its logit gradient into dz.
double cascade_term(const Eigen::MatrixXd& z, std::span<const int> labels,
                    const std::vector<std::uint8_t>& partner_correct, double cost, double w, Eigen::MatrixXd* dz) {
    const Eigen::Index n = z.cols();
    const auto k = static_cast<std::size_t>(z.rows());
    const double scale = w / static_cast<double>(n);
    std::vector<double> terms(static_cast<std::size_t>(n));
    std::vector<double> scratch(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::span<const double> logits(z.col(i).data(), k);
        const auto idx = static_cast<std::size_t>(i);
        const CorrectnessPair pair{static_cast<int>(argmax(logits)) == labels[idx], partner_correct[idx] != 0};
        if (dz) {
            terms[idx] = accumulate_ltc_grad(logits, pair, cost, scale, {dz->col(i).data(), k});
        } else {
            std::fill(scratch.begin(), scratch.end(), 0.0);
            terms[idx] = accumulate_ltc_grad(logits, pair, cost, 0.0, scratch);
        }
    }
    return pairwise_sum(terms) / static_cast<double>(n);
}

std::vector<std::uint8_t> argmax_correct(const Eigen::MatrixXd& z, std::span<const int> labels) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
        Eigen::Index j = 0;
        z.col(i).maxCoeff(&j);
        out[static_cast<std::size_t>(i)] = static_cast<int>(j) == labels[static_cast<std::size_t>(i)];
    }
    return out;
}

}  // namespace

LossTerms loss_and_gradient(const ToyNet& net, const Eigen::Ref<const Eigen::MatrixXd>& batch,
                            std::span<const int> labels, std::span<const std::uint8_t> exp_correct,
                            const Objective& objective, std::span<double> grad) {
    const Eigen::Index n = batch.cols();
    if (batch.rows() != net.input_dim()) throw ValidationError("loss_and_gradient: input dimension mismatch");
    if (static_cast<std::size_t>(n) != labels.size() || n == 0)
        throw ValidationError("loss_and_gradient: batch and label counts differ");
    const bool want_grad = !grad.empty();
    if (want_grad && grad.size() != net.param_count()) throw ValidationError("loss_and_gradient: gradient buffer size");
    const bool ltc = objective.kind == LossKind::ltc;
    const bool splitting = ltc && net.num_exits() > 1;
    if (ltc && !splitting && exp_correct.size() != labels.size())
        throw ValidationError("expensive-model correctness is required for the cascading LtC loss");

    // Forward with caches. acts[l] is the input of trunk layer l; acts[L] is the top.
    const std::size_t depth = net.trunk().size();
    std::vector<Eigen::MatrixXd> acts(depth + 1);
    acts[0] = batch;
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& s = net.trunk()[l];
        Eigen::MatrixXd z = net.weights(s) * acts[l];
        z.colwise() += net.bias(s);
        acts[l + 1] = z.cwiseMax(0.0);
    }
    const std::size_t exits = net.num_exits();
    std::vector<Eigen::MatrixXd> logits(exits);
    for (std::size_t e = 0; e < exits; ++e) {
        const auto& h = net.exits()[e];
        logits[e] = net.weights(h.layer) * acts[h.attach];
        logits[e].colwise() += net.bias(h.layer);
    }

    std::vector<Eigen::MatrixXd> dz(exits);
    std::vector<double> l_org(exits);
    for (std::size_t e = 0; e < exits; ++e) l_org[e] = cross_entropy(logits[e], labels, want_grad ? &dz[e] : nullptr);

    LossTerms out;
    if (!ltc) {
        for (double v : l_org) out.l_org += v;
        out.total = out.l_org;
    } else if (!splitting) {
        const std::vector<std::uint8_t> partner(exp_correct.begin(), exp_correct.end());
        const double l_casc = cascade_term(logits[0], labels, partner, objective.cost, objective.w,
                                           want_grad ? &dz[0] : nullptr);
        const auto joint = joint_loss(l_org[0], l_casc, objective.w);
        out = {joint.total, joint.l_org, joint.l_casc};
    } else {
        std::vector<double> l_casc(exits - 1);
        for (std::size_t m = 0; m + 1 < exits; ++m) {
            const auto partner = argmax_correct(logits[m + 1], labels);
            l_casc[m] = cascade_term(logits[m], labels, partner, objective.cost, objective.w,
                                     want_grad ? &dz[m] : nullptr);
        }
        out.total = splitting_loss(l_org, l_casc, objective.w);
        for (double v : l_org) out.l_org += v;
        for (double v : l_casc) out.l_casc += v;
    }
    if (!want_grad) return out;

    std::fill(grad.begin(), grad.end(), 0.0);
    auto grad_w = [&](const DenseShape& s) {
        return Eigen::Map<Eigen::MatrixXd>(grad.data() + s.offset, s.out, s.in);
    };
    auto grad_b = [&](const DenseShape& s) {
        return Eigen::Map<Eigen::VectorXd>(grad.data() + s.offset + s.weight_count(), s.out);
    };

    std::vector<Eigen::MatrixXd> d_act(depth + 1);
    auto add_into = [&](std::size_t level, const Eigen::MatrixXd& contrib) {
        if (d_act[level].size() == 0)
            d_act[level] = contrib;
        else
            d_act[level] += contrib;
    };
    for (std::size_t e = 0; e < exits; ++e) {
        const auto& h = net.exits()[e];
        grad_w(h.layer).noalias() = dz[e] * acts[h.attach].transpose();
        grad_b(h.layer) = dz[e].rowwise().sum();
        if (h.attach > 0) add_into(h.attach, net.weights(h.layer).transpose() * dz[e]);
    }
    for (std::size_t l = depth; l-- > 0;) {
        const auto& s = net.trunk()[l];
        // Rectifier mask: acts[l+1] > 0 exactly where the pre-activation is positive.
        const Eigen::MatrixXd dpre = (acts[l + 1].array() > 0.0).cast<double>() * d_act[l + 1].array();
        grad_w(s).noalias() = dpre * acts[l].transpose();
        grad_b(s) = dpre.rowwise().sum();
        if (l > 0) add_into(l, net.weights(s).transpose() * dpre);
    }
    return out;
}

void validate(const TrainConfig& c) {
    if (c.epochs < 1) throw ValidationError("train: epochs must be positive");
    if (c.batch_size < 1) throw ValidationError("train: batch_size must be positive");
    if (!(c.learning_rate > 0.0)) throw ValidationError("train: learning_rate must be positive");
    if (!(c.lr_decay > 0.0)) throw ValidationError("train: lr_decay must be positive");
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ValidationError("train: momentum must lie in [0,1)");
    if (!(c.weight_decay >= 0.0)) throw ValidationError("train: weight_decay must be non-negative");
    if (!(c.objective.w >= 0.0)) throw ValidationError("train: w must be non-negative");
    if (!(c.objective.cost >= 0.0)) throw ValidationError("train: C must be non-negative");
}

TrainConfig train_config_from_json(const nlohmann::json& raw, TrainConfig c) {
    if (!raw.is_object()) throw ValidationError("train config must be an object");
    try {
        c.epochs = raw.value("epochs", c.epochs);
        c.batch_size = raw.value("batch_size", c.batch_size);
        c.learning_rate = raw.value("learning_rate", c.learning_rate);
        c.lr_decay = raw.value("lr_decay", c.lr_decay);
        c.decay_epochs = raw.value("decay_epochs", c.decay_epochs);
        c.momentum = raw.value("momentum", c.momentum);
        c.weight_decay = raw.value("weight_decay", c.weight_decay);
        c.seed = raw.value("seed", c.seed);
        if (raw.contains("loss")) {
            const auto loss = raw["loss"].get<std::string>();
            if (loss == "org_only")
                c.objective.kind = LossKind::org_only;
            else if (loss == "ltc")
                c.objective.kind = LossKind::ltc;
            else
                throw ValidationError("train: loss must be org_only or ltc");
        }
        c.objective.w = raw.value("w", c.objective.w);
        c.objective.cost = raw.value("C", c.objective.cost);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("train config: ") + e.what());
    }
    validate(c);
    return c;
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"lr_decay", c.lr_decay},
            {"decay_epochs", c.decay_epochs},
            {"momentum", c.momentum},
            {"weight_decay", c.weight_decay},
            {"seed", c.seed},
            {"loss", c.objective.kind == LossKind::ltc ? "ltc" : "org_only"},
            {"w", c.objective.w},
            {"C", c.objective.cost}};
}

TrainResult train(ToyNet net, const FeatureTable& data, const TrainConfig& config,
                  std::span<const std::uint8_t> exp_correct) {
    validate(config);
    const std::size_t n = data.size();
    if (n == 0) throw ValidationError("train: empty training split");
    if (static_cast<int>(data.dim) != net.input_dim()) throw ValidationError("train: input dimension mismatch");
    const bool cascading_ltc = config.objective.kind == LossKind::ltc && net.num_exits() == 1;
    if (cascading_ltc && exp_correct.size() != n)
        throw ValidationError("train: missing expensive correctness for the cascading LtC loss");

    const auto x = feature_matrix(data);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    auto params = net.params();
    std::vector<double> velocity(params.size(), 0.0);
    std::vector<double> grad(params.size());
    Eigen::MatrixXd xb;
    std::vector<int> yb;
    std::vector<std::uint8_t> cb;

    TrainResult result;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto passed = std::count_if(config.decay_epochs.begin(), config.decay_epochs.end(),
                                          [epoch](int e) { return e <= epoch; });
        const double lr = config.learning_rate * std::pow(config.lr_decay, static_cast<double>(passed));
        std::shuffle(order.begin(), order.end(), rng);

        EpochRecord rec{epoch + 1, lr, 0.0, 0.0, 0.0};
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t b = std::min(config.batch_size, n - start);
            xb.resize(x.rows(), static_cast<Eigen::Index>(b));
            yb.resize(b);
            cb.resize(cascading_ltc ? b : 0);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t src = order[start + i];
                xb.col(static_cast<Eigen::Index>(i)) = x.col(static_cast<Eigen::Index>(src));
                yb[i] = data.labels[src];
                if (cascading_ltc) cb[i] = exp_correct[src];
            }
            const auto terms = loss_and_gradient(net, xb, yb, cb, config.objective, grad);
            const double weight = static_cast<double>(b) / static_cast<double>(n);
            rec.total += terms.total * weight;
            rec.l_org += terms.l_org * weight;
            rec.l_casc += terms.l_casc * weight;

            for (std::size_t p = 0; p < params.size(); ++p) {
                const double g = grad[p] + config.weight_decay * params[p];
                velocity[p] = config.momentum * velocity[p] + g;
                params[p] -= lr * velocity[p];
            }
        }
        result.history.push_back(rec);
    }
    result.net = std::move(net);
    return result;
}

std::vector<std::uint8_t> correctness(const ToyNet& net, const FeatureTable& data, int exit) {
    const auto all = forward(net, feature_matrix(data));
    const std::size_t e = exit < 0 ? all.size() - 1 : static_cast<std::size_t>(exit);
    if (e >= all.size()) throw ValidationError("correctness: exit index out of range");
    return argmax_correct(all[e], data.labels);
}

const std::vector<std::uint8_t>& CorrectnessCache::get(const ToyNet& net, const FeatureTable& data) {
    const auto key = std::make_pair(fingerprint(net), fingerprint(data));
    auto it = entries_.find(key);
    if (it != entries_.end()) {
        ++hits_;
        return it->second;
    }
    return entries_.emplace(key, correctness(net, data)).first->second;
}

}  // namespace casc
