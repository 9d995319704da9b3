#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "cascadekit/data_model.hpp"

namespace casc {

/// Cost of reaching one stage. A cumulative stage's MACs already include the
/// computation of every earlier cumulative stage (shared trunk).
struct StageCost {
    double macs = 0.0;
    bool cumulative = false;
};

/// What one stage predicted on one split.
struct StageOutputs {
    std::vector<int> preds;
    std::vector<double> confs;
    StageCost cost;
};

/// Number of samples routed onward: |{i : conf_i <= delta}|.
std::size_t n_expensive(std::span<const double> confs, double delta);

/// Two-stage cascade accuracy; ties conf == delta route to the expensive model.
double cascade_accuracy(std::span<const int> labels, std::span<const int> fast_preds,
                        std::span<const int> exp_preds, std::span<const double> confs, double delta);

/// Expected per-sample cost given how many samples reached each stage
/// (reached[0] == n). Non-cumulative stages charge every sample that reaches
/// them; a cumulative stage charges the samples for which it is the last
/// cumulative stage reached.
double cascade_macs(std::span<const StageCost> stages, std::span<const std::size_t> reached, std::size_t n);

/// Two-stage form: MACs^fast + (n_exp / N) * MACs^exp when neither stage is cumulative.
double cascade_macs(StageCost fast, StageCost expensive, std::size_t n_exp, std::size_t n);

struct SweepPoint {
    double delta = 0.0;
    double acc_casc = 0.0;
    std::size_t n_exp = 0;
    double macs_casc = 0.0;
};

using SweepCurve = std::vector<SweepPoint>;

/// Threshold that routes no sample: 0 when every confidence is positive,
/// otherwise the largest double below the minimum confidence.
double low_sentinel(std::span<const double> confs);

/// Exact two-stage sweep. Candidates are the sorted unique confidences plus a
/// low sentinel and 1.0, so every achievable (acc, n_exp) pair appears.
SweepCurve sweep_thresholds(std::span<const int> labels, const StageOutputs& fast, const StageOutputs& expensive);

struct ThresholdChoice {
    double delta = 0.0;
    std::size_t index = 0;  // position on the curve
    bool infeasible = false;  // constrained policy found no admissible point
};

/// max_accuracy: highest acc_casc, ties to smaller n_exp then smaller delta.
/// constrained_min_cost: smallest n_exp with acc_casc >= (1 - tolerance) * acc_exp,
/// falling back to max_accuracy (flagged) when no point qualifies.
ThresholdChoice select_threshold(const SweepCurve& curve, ThresholdPolicy policy, double tolerance, double acc_exp);

void write_sweep_csv(const SweepCurve& curve, std::ostream& out);
SweepCurve read_sweep_csv(std::istream& in);

/// Sample i exits at the first stage m < M-1 with confs[m][i] > deltas[m],
/// otherwise at the last stage.
RoutingResult route_multistage(std::span<const StageOutputs> stages, std::span<const int> labels,
                               std::span<const double> deltas);

struct MultiStageChoice {
    std::vector<double> deltas;
    RoutingResult result;
    bool infeasible = false;
};

inline constexpr std::size_t kDefaultCandidateCap = 200;

/// Per-stage threshold candidates: unique confidences, evenly subsampled to at
/// most `cap`, plus the two sentinels.
std::vector<double> threshold_candidates(std::span<const double> confs, std::size_t cap = kDefaultCandidateCap);

/// Threshold vector for an M-stage cascade. M == 2 is the exact sweep; M == 3
/// searches the full product of capped candidate sets; larger M fixes
/// thresholds greedily from the back, each a sweep of one stage against the
/// already-tuned tail. The accuracy target for the constrained policy is the
/// last stage's standalone accuracy; cost is compared by macs_casc.
MultiStageChoice search_multistage_thresholds(std::span<const StageOutputs> stages, std::span<const int> labels,
                                              ThresholdPolicy policy, double tolerance,
                                              std::size_t cap = kDefaultCandidateCap);

/// Builds stage outputs for every table of a joined split.
std::vector<StageOutputs> stage_outputs(const JoinedSplit& split, std::span<const StageCost> costs,
                                        ScoreMethod method, std::span<const double> temperatures = {});

}  // namespace casc
