#pragma once

#include <span>
#include <vector>

#include "cascadekit/data_model.hpp"

namespace casc {

/// A probability vector: entries in [0,1] summing to 1 within 1e-9.
class ProbVector {
public:
    /// Validates an arbitrary vector; throws ValidationError if it is not a distribution.
    static ProbVector from(std::vector<double> probs);

    std::span<const double> values() const noexcept { return probs_; }
    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t j) const { return probs_[j]; }
    std::size_t argmax() const;

private:
    friend ProbVector softmax(std::span<const double> logits);
    explicit ProbVector(std::vector<double> probs) : probs_(std::move(probs)) {}
    std::vector<double> probs_;
};

struct ConfidenceScore {
    double value = 0.0;
    ScoreMethod method = ScoreMethod::max_prob;
};

/// Max-shifted softmax. Throws ValidationError on non-finite input.
ProbVector softmax(std::span<const double> logits);

/// max_prob: max_j p_j. neg_entropy: 1 - H(p)/log K, so both scores share the
/// [0,1] range and higher means more confident. For K = 1 both scores are 1.
ConfidenceScore score(const ProbVector& p, ScoreMethod method);

/// score(softmax(logits / temperature), method) without intermediate objects.
double confidence(std::span<const double> logits, ScoreMethod method, double temperature = 1.0);

std::size_t argmax(std::span<const double> values);

std::vector<int> predictions(const LogitTable& table);
std::vector<double> confidences(const LogitTable& table, ScoreMethod method, double temperature = 1.0);
double accuracy(const LogitTable& table);

/// Mean negative log-likelihood of softmax(logits / temperature) against the labels.
double mean_nll(const LogitTable& table, double temperature = 1.0);

inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 20.0;

/// Temperature minimizing validation NLL over [0.05, 20]: a 50-point grid on
/// log T, golden-section refinement around the best grid point to
/// |d log T| < 1e-4, and never worse than T = 1.
double fit_temperature(const LogitTable& val);

/// Divides every logit by `temperature`.
LogitTable apply_temperature(const LogitTable& table, double temperature);

inline constexpr int kDefaultEceBins = 15;

/// Expected calibration error of max_prob confidence over equal-width bins.
double ece(const LogitTable& table, int bins = kDefaultEceBins);
double ece(std::span<const double> confs, std::span<const int> correct, int bins = kDefaultEceBins);

}  // namespace casc
