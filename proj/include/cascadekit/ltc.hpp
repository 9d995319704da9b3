#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cascadekit/data_model.hpp"

namespace casc {

/// Whether the fast and the expensive model got one sample right.
struct CorrectnessPair {
    bool fast_correct = false;
    bool exp_correct = false;

    static CorrectnessPair from_logits(std::span<const double> fast_logits, std::span<const double> exp_logits,
                                       int label);
};

struct LossBreakdown {
    double l_org = 0.0;
    double l_casc = 0.0;
    double w = 0.0;
    double total = 0.0;
};

/// conf * [fast wrong] + (1 - conf) * ([exp wrong] + C)
double ltc_loss_sample(double conf, CorrectnessPair pair, double cost);

/// d ltc_loss_sample / d conf = [fast wrong] - ([exp wrong] + C).
/// The indicators are constants; only conf carries gradient.
double ltc_grad_conf(CorrectnessPair pair, double cost);

/// Mean of ltc_loss_sample over a batch, summed pairwise in index order.
double ltc_loss_batch(std::span<const double> confs, std::span<const CorrectnessPair> pairs, double cost);

/// Gradient of ltc_loss_sample(max softmax(logits), pair, C) with respect to the
/// logits, the argmax index held fixed.
std::vector<double> grad_wrt_logits(std::span<const double> fast_logits, CorrectnessPair pair, double cost);

/// Same as above, accumulating `scale` times the gradient into `out` and
/// returning the sample's loss. Used by the trainer.
double accumulate_ltc_grad(std::span<const double> fast_logits, CorrectnessPair pair, double cost, double scale,
                           std::span<double> out);

/// total = l_org + w * l_casc
LossBreakdown joint_loss(double l_org, double l_casc, double w);

enum class StageLoss { original, joint };

struct TrainingStep {
    std::size_t stage = 0;   // 0-based; 0 is the fastest model
    StageLoss loss = StageLoss::original;
    std::size_t partner = 0;  // frozen successor supplying exp correctness (joint only)
};

/// Model-cascading order: the last model with the original loss, then each
/// earlier model with the joint loss against its frozen immediate successor.
std::vector<TrainingStep> cascading_schedule(std::span<const ModelProfile> profiles);

/// sum_{m<M} (l_org[m] + w * l_casc[m]) + l_org[M]
double splitting_loss(std::span<const double> l_org, std::span<const double> l_casc, double w);

/// Empty when 0 <= C <= 1; otherwise a description of the sign flip in the
/// exp-only-correct gradient.
std::vector<std::string> cost_warnings(double cost);

/// Deterministic pairwise summation in index order.
double pairwise_sum(std::span<const double> values);

}  // namespace casc
