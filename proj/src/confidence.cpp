#include "cascadekit/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cascadekit/error.hpp"

namespace casc {

namespace {

void softmax_into(std::span<const double> logits, double inv_temperature, std::vector<double>& out) {
    out.resize(logits.size());
    double hi = -INFINITY;
    for (double z : logits) {
        if (!std::isfinite(z)) throw ValidationError("softmax: non-finite logit");
        hi = std::max(hi, z);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        out[j] = std::exp((logits[j] - hi) * inv_temperature);
        sum += out[j];
    }
    for (double& p : out) p /= sum;
}

double score_of(std::span<const double> p, ScoreMethod method) {
    if (method == ScoreMethod::max_prob) return *std::max_element(p.begin(), p.end());
    if (p.size() < 2) return 1.0;
    double h = 0.0;
    for (double q : p)
        if (q > 0.0) h -= q * std::log(q);
    const double s = 1.0 - h / std::log(static_cast<double>(p.size()));
    return std::clamp(s, 0.0, 1.0);
}

}  // namespace

ProbVector ProbVector::from(std::vector<double> probs) {
    if (probs.empty()) throw ValidationError("probability vector is empty");
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probability outside [0,1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("probabilities do not sum to 1");
    return ProbVector(std::move(probs));
}

std::size_t ProbVector::argmax() const { return casc::argmax(probs_); }

ProbVector softmax(std::span<const double> logits) {
    if (logits.empty()) throw ValidationError("softmax: empty input");
    std::vector<double> p;
    softmax_into(logits, 1.0, p);
    return ProbVector(std::move(p));
}

ConfidenceScore score(const ProbVector& p, ScoreMethod method) {
    return {score_of(p.values(), method), method};
}

double confidence(std::span<const double> logits, ScoreMethod method, double temperature) {
    thread_local std::vector<double> p;
    softmax_into(logits, 1.0 / temperature, p);
    return score_of(p, method);
}

std::size_t argmax(std::span<const double> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::vector<int> predictions(const LogitTable& table) {
    std::vector<int> out(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) out[i] = static_cast<int>(argmax(table.logits(i)));
    return out;
}

std::vector<double> confidences(const LogitTable& table, ScoreMethod method, double temperature) {
    if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
    std::vector<double> out(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) out[i] = confidence(table.logits(i), method, temperature);
    return out;
}

double accuracy(const LogitTable& table) {
    if (table.empty()) throw ValidationError("accuracy of an empty table");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < table.size(); ++i)
        correct += static_cast<int>(argmax(table.logits(i))) == table.label(i);
    return static_cast<double>(correct) / static_cast<double>(table.size());
}

double mean_nll(const LogitTable& table, double temperature) {
    if (table.empty()) throw ValidationError("NLL of an empty table");
    if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
    const double inv_t = 1.0 / temperature;
    double total = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto z = table.logits(i);
        const double hi = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp((v - hi) * inv_t);
        // -log softmax_y = log sum exp((z - hi)/T) - (z_y - hi)/T
        total += std::log(sum) - (z[static_cast<std::size_t>(table.label(i))] - hi) * inv_t;
    }
    return total / static_cast<double>(table.size());
}

double fit_temperature(const LogitTable& val) {
    if (val.empty()) throw ValidationError("fit_temperature: empty validation table");
    const double lo = std::log(kMinTemperature);
    const double hi = std::log(kMaxTemperature);
    auto nll_at = [&](double log_t) { return mean_nll(val, std::exp(log_t)); };

    constexpr int kGrid = 50;
    const double step = (hi - lo) / (kGrid - 1);
    int best = 0;
    double best_nll = INFINITY;
    for (int i = 0; i < kGrid; ++i) {
        const double v = nll_at(lo + step * i);
        if (v < best_nll) {
            best_nll = v;
            best = i;
        }
    }

    double a = lo + step * std::max(best - 1, 0);
    double b = lo + step * std::min(best + 1, kGrid - 1);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = nll_at(c);
    double fd = nll_at(d);
    while (b - a > 1e-4) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = nll_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = nll_at(d);
        }
    }

    // Endpoints of the bracket are candidates too: at the search bounds the
    // minimum sits on the boundary.
    double best_log_t = lo + step * best;
    double best_val = best_nll;
    for (double cand : {a, b, 0.5 * (a + b)}) {
        const double v = nll_at(cand);
        if (v < best_val) {
            best_val = v;
            best_log_t = cand;
        }
    }
    if (mean_nll(val, 1.0) <= best_val) return 1.0;
    return std::exp(best_log_t);
}

LogitTable apply_temperature(const LogitTable& table, double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw ValidationError("temperature must be a positive finite number");
    std::vector<double> v = table.values();
    for (double& z : v) z /= temperature;
    return table.with_values(std::move(v));
}

double ece(std::span<const double> confs, std::span<const int> correct, int bins) {
    if (bins < 1) throw ValidationError("ece: bins must be >= 1");
    if (confs.size() != correct.size()) throw ValidationError("ece: length mismatch");
    if (confs.empty()) throw ValidationError("ece: empty input");
    std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> hits(static_cast<std::size_t>(bins), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
    for (std::size_t i = 0; i < confs.size(); ++i) {
        // Bins are (k/B, (k+1)/B]; confidence 0 falls in the first bin.
        int k = static_cast<int>(std::ceil(confs[i] * bins)) - 1;
        k = std::clamp(k, 0, bins - 1);
        conf_sum[static_cast<std::size_t>(k)] += confs[i];
        hits[static_cast<std::size_t>(k)] += correct[i] ? 1.0 : 0.0;
        ++count[static_cast<std::size_t>(k)];
    }
    const double n = static_cast<double>(confs.size());
    double total = 0.0;
    for (std::size_t k = 0; k < count.size(); ++k) {
        if (count[k] == 0) continue;
        const double c = static_cast<double>(count[k]);
        total += (c / n) * std::abs(hits[k] / c - conf_sum[k] / c);
    }
    return total;
}

double ece(const LogitTable& table, int bins) {
    if (table.empty()) throw ValidationError("ece: empty table");
    const auto confs = confidences(table, ScoreMethod::max_prob);
    const auto preds = predictions(table);
    std::vector<int> correct(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) correct[i] = preds[i] == table.label(i);
    return ece(confs, correct, bins);
}

}  // namespace casc
