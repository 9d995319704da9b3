#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cascadekit/data_model.hpp"
#include "json.hpp"

namespace casc {

/// A dense layer's position inside the flat parameter buffer: an out x in
/// column-major weight matrix followed by `out` biases.
struct DenseShape {
    int in = 0;
    int out = 0;
    std::size_t offset = 0;

    std::size_t weight_count() const noexcept { return static_cast<std::size_t>(in) * static_cast<std::size_t>(out); }
    std::size_t param_count() const noexcept { return weight_count() + static_cast<std::size_t>(out); }
    std::uint64_t macs() const noexcept { return weight_count(); }
};

struct ExitHead {
    /// Number of trunk layers computed before this head; 0 attaches to the input.
    std::size_t attach = 0;
    DenseShape layer;
};

struct MacsReport {
    std::uint64_t trunk = 0;  // trunk layers up to the last exit
    std::uint64_t total = 0;  // one pass computing every exit
    /// Cost of reaching exit e: trunk up to its attach point plus heads 0..e.
    std::vector<std::uint64_t> per_exit_cumulative;
};

/// Rectifier MLP with one or more linear exit heads on a shared trunk.
/// Parameters live in one flat buffer so optimizers and gradient checks can
/// treat them as a single vector.
class ToyNet {
public:
    ToyNet() = default;

    /// Single exit after the last hidden layer: layer sizes input -> hidden... -> classes.
    static ToyNet mlp(int input_dim, const std::vector<int>& hidden, int num_classes, std::uint64_t seed);
    /// Shared trunk with heads after the listed hidden layers (strictly increasing,
    /// the last equal to the trunk depth).
    static ToyNet multi_exit(int input_dim, const std::vector<int>& trunk_hidden, const std::vector<std::size_t>& attach,
                             int num_classes, std::uint64_t seed);

    int input_dim() const noexcept { return input_dim_; }
    int num_classes() const noexcept { return num_classes_; }
    std::size_t num_exits() const noexcept { return exits_.size(); }
    const std::vector<DenseShape>& trunk() const noexcept { return trunk_; }
    const std::vector<ExitHead>& exits() const noexcept { return exits_; }

    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }
    std::size_t param_count() const noexcept { return params_.size(); }

    Eigen::Map<Eigen::MatrixXd> weights(const DenseShape& s) {
        return {params_.data() + s.offset, s.out, s.in};
    }
    Eigen::Map<const Eigen::MatrixXd> weights(const DenseShape& s) const {
        return {params_.data() + s.offset, s.out, s.in};
    }
    Eigen::Map<Eigen::VectorXd> bias(const DenseShape& s) {
        return {params_.data() + s.offset + s.weight_count(), s.out};
    }
    Eigen::Map<const Eigen::VectorXd> bias(const DenseShape& s) const {
        return {params_.data() + s.offset + s.weight_count(), s.out};
    }

    MacsReport macs() const;

    /// Layer-size description, e.g. [2, 8, 4] for a single-exit net.
    std::vector<int> layer_sizes() const;

private:
    ToyNet(int input_dim, const std::vector<int>& trunk_hidden, const std::vector<std::size_t>& attach,
           int num_classes);
    void init(std::uint64_t seed);

    int input_dim_ = 0;
    int num_classes_ = 0;
    std::vector<DenseShape> trunk_;
    std::vector<ExitHead> exits_;
    std::vector<double> params_;

    friend ToyNet toynet_from_json(const nlohmann::json& raw);
};

MacsReport count_macs(const ToyNet& net);

/// Column-major d x n view of a feature table (each column one sample).
Eigen::Map<const Eigen::MatrixXd> feature_matrix(const FeatureTable& table);

/// Logits (K x n) at every exit from one trunk pass.
std::vector<Eigen::MatrixXd> forward(const ToyNet& net, const Eigen::Ref<const Eigen::MatrixXd>& batch);

/// Logits of one exit (default: the last) as a table aligned with `data`.
LogitTable export_logits(const ToyNet& net, const FeatureTable& data, std::string model_id, int exit = -1);
std::vector<LogitTable> export_all_logits(const ToyNet& net, const FeatureTable& data, const std::string& model_id);

/// Versioned text form: layer sizes plus row-major weight lists.
nlohmann::json to_json(const ToyNet& net);
ToyNet toynet_from_json(const nlohmann::json& raw);
void save_toynet(const ToyNet& net, const std::filesystem::path& path);
ToyNet load_toynet(const std::filesystem::path& path);

/// FNV-1a over the raw parameter bytes and shape.
std::uint64_t fingerprint(const ToyNet& net);
std::uint64_t fingerprint(const FeatureTable& data);

}  // namespace casc
