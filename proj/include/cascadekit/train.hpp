#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "cascadekit/toynet.hpp"
#include "json.hpp"

namespace casc {

enum class LossKind { org_only, ltc };

/// org_only: cross-entropy, summed over exits for multi-exit nets.
/// ltc on a single-exit net: cross-entropy + w * L_casc against a frozen
/// successor whose per-sample correctness is supplied (model cascading).
/// ltc on a multi-exit net: every adjacent exit pair contributes
/// w * L_casc(m, m+1) next to the per-exit cross-entropies (model splitting).
struct Objective {
    LossKind kind = LossKind::org_only;
    double w = 0.0;
    double cost = 0.5;
};

struct LossTerms {
    double total = 0.0;
    double l_org = 0.0;
    double l_casc = 0.0;
};

/// Batch loss and, when `grad` is non-empty, its gradient with respect to
/// net.params() (same layout). Correctness indicators are constants; the
/// argmax is frozen within the pass.
LossTerms loss_and_gradient(const ToyNet& net, const Eigen::Ref<const Eigen::MatrixXd>& batch,
                            std::span<const int> labels, std::span<const std::uint8_t> exp_correct,
                            const Objective& objective, std::span<double> grad);

struct TrainConfig {
    int epochs = 30;
    std::size_t batch_size = 128;
    double learning_rate = 0.1;
    double lr_decay = 0.2;
    std::vector<int> decay_epochs{9, 18, 24};
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;
    Objective objective;
};

void validate(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& raw, TrainConfig defaults = {});
nlohmann::json to_json(const TrainConfig& config);

struct EpochRecord {
    int epoch = 0;
    double learning_rate = 0.0;
    double total = 0.0;
    double l_org = 0.0;
    double l_casc = 0.0;
};

struct TrainResult {
    ToyNet net;
    std::vector<EpochRecord> history;
};

/// Shuffled minibatch SGD with momentum, weight decay and step-decay learning
/// rate. Deterministic per config.seed. `exp_correct` is required for the
/// cascading LtC objective and indexed like `data`.
TrainResult train(ToyNet net, const FeatureTable& data, const TrainConfig& config,
                  std::span<const std::uint8_t> exp_correct = {});

/// 1 where the chosen exit's argmax equals the label.
std::vector<std::uint8_t> correctness(const ToyNet& net, const FeatureTable& data, int exit = -1);

/// Correctness of frozen models, keyed by (weights fingerprint, data fingerprint).
class CorrectnessCache {
public:
    const std::vector<std::uint8_t>& get(const ToyNet& net, const FeatureTable& data);
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t hits() const noexcept { return hits_; }

private:
    std::map<std::pair<std::uint64_t, std::uint64_t>, std::vector<std::uint8_t>> entries_;
    std::size_t hits_ = 0;
};

}  // namespace casc
