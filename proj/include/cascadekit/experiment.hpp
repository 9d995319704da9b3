#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cascadekit/cascade.hpp"
#include "cascadekit/io.hpp"
#include "cascadekit/synthetic.hpp"
#include "cascadekit/train.hpp"
#include "json.hpp"

namespace casc {

enum class Setting { cascading, splitting };

struct StageArch {
    std::string model_id;
    std::vector<int> hidden;
    /// Training overrides for this stage; empty fields inherit the shared block.
    nlohmann::json train_overrides = nlohmann::json::object();
};

struct SplittingArch {
    std::vector<int> trunk;
    std::vector<std::size_t> exits;  // attach indices, 1-based hidden layer positions
};

struct ExperimentConfig {
    std::string name = "default";
    Setting setting = Setting::cascading;
    SyntheticSpec data;
    std::vector<StageArch> stages;
    SplittingArch splitting;
    TrainConfig train;
    std::vector<std::string> methods{"baseline", "temp_scaling", "ltc"};
    double cost = 0.5;
    /// Candidate loss weights; with more than one, w is chosen per seed on validation.
    std::vector<double> w_grid{1.0};
    double tolerance = 0.0;
    ScoreMethod scoring = ScoreMethod::max_prob;
    ThresholdPolicy policy = ThresholdPolicy::max_accuracy;
    std::uint64_t seed = 0;
    std::vector<double> c_sweep;
    std::vector<double> w_sweep;
    /// Loss weight used by the C sweep.
    double sweep_w = 4.0;
    int histogram_bins = 10;
    std::size_t candidate_cap = kDefaultCandidateCap;

    std::size_t num_stages() const noexcept {
        return setting == Setting::cascading ? stages.size() : splitting.exits.size();
    }
};

/// The desk-scale benchmark: 8-class two-blob mixture, 1x8 fast MLP, 2x64 expensive MLP.
ExperimentConfig default_experiment_config();
ExperimentConfig experiment_config_from_json(const nlohmann::json& raw);
nlohmann::json to_json(const ExperimentConfig& config);

enum class Case { both_correct = 0, fast_only = 1, exp_only = 2, both_wrong = 3 };
const char* to_string(Case c);

/// Confidence histograms of the first stage split by which of the first two
/// stages is correct.
struct FourCaseHistogram {
    int bins = 10;
    std::array<std::vector<std::size_t>, 4> counts;
};

FourCaseHistogram four_case_histogram(std::span<const double> confs, std::span<const std::uint8_t> fast_correct,
                                      std::span<const std::uint8_t> exp_correct, int bins);

struct MethodOutcome {
    std::string method;
    std::size_t seed_index = 0;
    double w = 0.0;
    double cost = 0.0;
    std::vector<double> temperatures;
    std::vector<double> deltas;
    bool infeasible = false;
    double val_acc = 0.0;
    double val_macs = 0.0;
    double test_acc = 0.0;
    double test_macs = 0.0;
    double test_n_exp_frac = 0.0;  // fraction of test samples passed beyond the first stage
    std::vector<std::size_t> exit_counts;
    std::vector<double> stage_test_accuracy;
    SweepCurve val_curve;  // two-stage cascades only
    FourCaseHistogram histogram;
};

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;  // sample standard deviation / sqrt(n); 0 for n == 1
    std::size_t n = 0;
};

MeanSe mean_se(std::span<const double> values);

struct SummaryRow {
    std::string method;
    MeanSe acc;
    MeanSe macs;
    MeanSe n_exp_frac;
};

struct ParamSweepRow {
    std::string param;
    double value = 0.0;
    MeanSe acc;
    MeanSe macs;
    MeanSe n_exp_frac;
};

struct StageSummary {
    std::string model_id;
    double macs = 0.0;
    bool cumulative = false;
    MeanSe accuracy;  // standalone test accuracy of the original-loss model
};

struct ExperimentReport {
    ExperimentConfig config;
    std::size_t seeds = 0;
    std::vector<StageSummary> stages;
    std::vector<MethodOutcome> outcomes;
    std::vector<SummaryRow> summary;
    std::vector<ParamSweepRow> c_sweep;
    std::vector<ParamSweepRow> w_sweep;
};

/// Per seed: generate data, train the stages, fit thresholds on validation and
/// evaluate on test for every method; then aggregate mean and standard error.
/// Errors carry the seed and stage that failed.
ExperimentReport run_experiment(const ExperimentConfig& config, std::size_t seeds);

std::vector<SummaryRow> summarize(const std::vector<MethodOutcome>& outcomes, const std::vector<std::string>& methods);

/// Aligned plain-text table; standard-error columns are omitted when n == 1.
std::string format_summary(const std::vector<SummaryRow>& rows, const std::vector<StageSummary>& stages);
std::string format_param_sweep(const std::vector<ParamSweepRow>& rows);

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out);
std::vector<SummaryRow> read_summary_csv(std::istream& in);
void write_stage_csv(const std::vector<StageSummary>& rows, std::ostream& out);
std::vector<StageSummary> read_stage_csv(std::istream& in);
void write_param_sweep_csv(const std::vector<ParamSweepRow>& rows, std::ostream& out);
std::vector<ParamSweepRow> read_param_sweep_csv(std::istream& in);

/// Adds report.json, summary.csv, stages.csv, per_seed.csv, histograms.csv,
/// the sweep tables and per-seed validation curves under `dir`.
void stage_report(const ExperimentReport& report, const std::filesystem::path& dir, StagedOutputs& out);

}  // namespace casc
