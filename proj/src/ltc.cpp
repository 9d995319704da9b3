#include "cascadekit/ltc.hpp"

#include <algorithm>
#include <cmath>

#include "cascadekit/confidence.hpp"
#include "cascadekit/error.hpp"

namespace casc {

CorrectnessPair CorrectnessPair::from_logits(std::span<const double> fast_logits, std::span<const double> exp_logits,
                                             int label) {
    return {static_cast<int>(argmax(fast_logits)) == label, static_cast<int>(argmax(exp_logits)) == label};
}

double ltc_loss_sample(double conf, CorrectnessPair pair, double cost) {
    const double fast_wrong = pair.fast_correct ? 0.0 : 1.0;
    const double exp_wrong = pair.exp_correct ? 0.0 : 1.0;
    return conf * fast_wrong + (1.0 - conf) * (exp_wrong + cost);
}

double ltc_grad_conf(CorrectnessPair pair, double cost) {
    const double fast_wrong = pair.fast_correct ? 0.0 : 1.0;
    const double exp_wrong = pair.exp_correct ? 0.0 : 1.0;
    return fast_wrong - (exp_wrong + cost);
}

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double ltc_loss_batch(std::span<const double> confs, std::span<const CorrectnessPair> pairs, double cost) {
    if (confs.size() != pairs.size()) throw ValidationError("ltc_loss_batch: length mismatch");
    if (confs.empty()) throw ValidationError("ltc_loss_batch: empty batch");
    std::vector<double> terms(confs.size());
    for (std::size_t i = 0; i < confs.size(); ++i) terms[i] = ltc_loss_sample(confs[i], pairs[i], cost);
    return pairwise_sum(terms) / static_cast<double>(terms.size());
}

double accumulate_ltc_grad(std::span<const double> fast_logits, CorrectnessPair pair, double cost, double scale,
                           std::span<double> out) {
    const std::size_t k = fast_logits.size();
    const double hi = *std::max_element(fast_logits.begin(), fast_logits.end());
    const std::size_t top = argmax(fast_logits);
    double sum = 0.0;
    thread_local std::vector<double> p;
    p.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        p[j] = std::exp(fast_logits[j] - hi);
        sum += p[j];
    }
    for (double& q : p) q /= sum;
    const double conf = p[top];
    const double g = scale * ltc_grad_conf(pair, cost);
    // d p_top / d z_j = p_top * ([j == top] - p_j)
    for (std::size_t j = 0; j < k; ++j) out[j] += g * conf * ((j == top ? 1.0 : 0.0) - p[j]);
    return ltc_loss_sample(conf, pair, cost);
}

std::vector<double> grad_wrt_logits(std::span<const double> fast_logits, CorrectnessPair pair, double cost) {
    if (fast_logits.empty()) throw ValidationError("grad_wrt_logits: empty logits");
    for (double z : fast_logits)
        if (!std::isfinite(z)) throw ValidationError("grad_wrt_logits: non-finite logit");
    std::vector<double> g(fast_logits.size(), 0.0);
    accumulate_ltc_grad(fast_logits, pair, cost, 1.0, g);
    return g;
}

LossBreakdown joint_loss(double l_org, double l_casc, double w) {
    if (!(w >= 0.0)) throw ValidationError("joint_loss: w must be non-negative");
    return {l_org, l_casc, w, l_org + w * l_casc};
}

std::vector<TrainingStep> cascading_schedule(std::span<const ModelProfile> profiles) {
    if (profiles.size() < 2) throw ValidationError("cascading_schedule: at least 2 models required");
    std::vector<TrainingStep> plan;
    const std::size_t last = profiles.size() - 1;
    plan.push_back({last, StageLoss::original, last});
    for (std::size_t m = last; m-- > 0;) plan.push_back({m, StageLoss::joint, m + 1});
    return plan;
}

double splitting_loss(std::span<const double> l_org, std::span<const double> l_casc, double w) {
    if (l_org.empty() || l_casc.size() + 1 != l_org.size())
        throw ValidationError("splitting_loss: expected M original losses and M-1 cascade losses");
    double total = 0.0;
    for (std::size_t m = 0; m < l_casc.size(); ++m) total += l_org[m] + w * l_casc[m];
    return total + l_org.back();
}

std::vector<std::string> cost_warnings(double cost) {
    std::vector<std::string> out;
    if (cost > 1.0)
        out.emplace_back("C > 1: the exp-only-correct slope 1 - C is negative, so that case also pushes confidence up");
    return out;
}

}  // namespace casc
