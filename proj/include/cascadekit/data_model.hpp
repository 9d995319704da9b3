#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace casc {

struct LogitRow {
    std::string sample_id;
    int label = 0;
    std::vector<double> logits;
};

/// Per-sample logits of one model on one split. Immutable once constructed;
/// the constructor enforces finite logits, labels in [0, K) and unique ids.
class LogitTable {
public:
    LogitTable() = default;
    LogitTable(std::string model_id, int num_classes, std::vector<LogitRow> rows);

    const std::string& model_id() const noexcept { return model_id_; }
    int num_classes() const noexcept { return num_classes_; }
    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }

    const std::string& sample_id(std::size_t i) const { return ids_[i]; }
    int label(std::size_t i) const { return labels_[i]; }
    std::span<const double> logits(std::size_t i) const {
        return {values_.data() + i * static_cast<std::size_t>(num_classes_),
                static_cast<std::size_t>(num_classes_)};
    }

    const std::vector<std::string>& sample_ids() const noexcept { return ids_; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    /// Row-major N x K.
    const std::vector<double>& values() const noexcept { return values_; }

    /// Same ids and labels, new logits (row-major N x K). Used by transforms.
    LogitTable with_values(std::vector<double> values) const;
    LogitTable renamed(std::string model_id) const;

private:
    std::string model_id_;
    int num_classes_ = 0;
    std::vector<std::string> ids_;
    std::vector<int> labels_;
    std::vector<double> values_;
};

/// Labeled feature matrix produced by the synthetic generator. Shares the
/// columnar layout of logit tables with `x_` columns in place of `logit_`.
struct FeatureTable {
    std::size_t dim = 0;
    int num_classes = 0;
    std::vector<std::string> sample_ids;
    std::vector<int> labels;
    std::vector<double> values;  // row-major N x dim

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

LogitTable load_logit_table(const std::filesystem::path& path, std::string model_id = {});
void write_logit_table(const LogitTable& table, std::ostream& out);
void write_logit_table(const LogitTable& table, const std::filesystem::path& path);

FeatureTable load_feature_table(const std::filesystem::path& path, int num_classes);
void write_feature_table(const FeatureTable& table, std::ostream& out);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_real(double value);

class ModelProfile {
public:
    ModelProfile() = default;
    ModelProfile(std::string model_id, double macs,
                 std::optional<double> standalone_accuracy = std::nullopt);

    const std::string& model_id() const noexcept { return model_id_; }
    double macs() const noexcept { return macs_; }
    const std::optional<double>& standalone_accuracy() const noexcept { return accuracy_; }

private:
    std::string model_id_;
    double macs_ = 0.0;
    std::optional<double> accuracy_;
};

enum class ScoreMethod { max_prob, neg_entropy };
enum class ThresholdPolicy { max_accuracy, constrained_min_cost };

ScoreMethod parse_score_method(const std::string& name);
ThresholdPolicy parse_threshold_policy(const std::string& name);
std::string to_string(ScoreMethod method);
std::string to_string(ThresholdPolicy policy);

struct StageSpec {
    ModelProfile profile;
    std::string logits_path;
    /// True when this stage's MACs already include the computation of every
    /// earlier cumulative stage (exits of one shared-trunk network).
    bool cumulative_cost = false;
};

inline constexpr double kDefaultCost = 0.5;
inline constexpr double kDefaultTolerance = 0.0;

struct CascadeSpec {
    std::vector<StageSpec> stages;
    std::vector<double> thresholds;
    double cost = kDefaultCost;
    std::optional<double> loss_weight;
    double tolerance = kDefaultTolerance;
    ScoreMethod scoring = ScoreMethod::max_prob;
    ThresholdPolicy policy = ThresholdPolicy::max_accuracy;
    std::uint64_t seed = 0;
    /// Non-fatal findings, e.g. a cost parameter that flips the sign of the
    /// exp-only-correct gradient.
    std::vector<std::string> warnings;

    std::size_t num_stages() const noexcept { return stages.size(); }
};

/// Validates a cascade document and fills defaults. Thresholds may be omitted,
/// in which case every threshold is 1 (all samples reach the final stage).
CascadeSpec validate_spec(const nlohmann::json& raw);

/// Per-sample exit assignments and aggregate metrics of routing one split.
struct RoutingResult {
    std::vector<std::size_t> exit_stage;    // indexed like the split's samples
    std::vector<std::size_t> exit_counts;   // per stage, sums to N
    std::vector<std::size_t> reached_counts;  // per stage; reached_counts[m] is N^exp for stage m
    std::size_t correct = 0;
    double acc_casc = 0.0;
    double macs_casc = 0.0;

    std::size_t num_samples() const noexcept { return exit_stage.size(); }
};

/// Several tables of the same split aligned on sample_id, in the order of the
/// first table. Any missing or extra id, or a label disagreement, is an error.
struct JoinedSplit {
    std::vector<std::string> sample_ids;
    std::vector<int> labels;
    std::vector<LogitTable> stages;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t num_stages() const noexcept { return stages.size(); }
};

JoinedSplit join_tables(std::vector<LogitTable> tables);

}  // namespace casc
