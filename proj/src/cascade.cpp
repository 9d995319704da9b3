#include "cascadekit/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <sstream>

#include "cascadekit/confidence.hpp"
#include "cascadekit/error.hpp"

namespace casc {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw ValidationError(what);
}

double fraction(std::size_t k, std::size_t n) {
    return static_cast<double>(k) / static_cast<double>(n);
}

// Ordering key for comparing threshold choices under a policy.
struct Candidate {
    std::size_t correct = 0;
    double macs = 0.0;
    bool feasible = false;
};

bool better(const Candidate& a, const Candidate& b, ThresholdPolicy policy) {
    if (policy == ThresholdPolicy::constrained_min_cost && a.feasible != b.feasible) return a.feasible;
    if (policy == ThresholdPolicy::constrained_min_cost && a.feasible) {
        if (a.macs != b.macs) return a.macs < b.macs;
        return a.correct > b.correct;
    }
    if (a.correct != b.correct) return a.correct > b.correct;
    return a.macs < b.macs;
}

}  // namespace

std::size_t n_expensive(std::span<const double> confs, double delta) {
    return static_cast<std::size_t>(std::count_if(confs.begin(), confs.end(), [delta](double c) { return c <= delta; }));
}

double cascade_accuracy(std::span<const int> labels, std::span<const int> fast_preds,
                        std::span<const int> exp_preds, std::span<const double> confs, double delta) {
    const std::size_t n = labels.size();
    require(fast_preds.size() == n && exp_preds.size() == n && confs.size() == n,
            "cascade_accuracy: length mismatch");
    require(n > 0, "cascade_accuracy: empty split");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const int pred = confs[i] > delta ? fast_preds[i] : exp_preds[i];
        correct += pred == labels[i];
    }
    return fraction(correct, n);
}

double cascade_macs(std::span<const StageCost> stages, std::span<const std::size_t> reached, std::size_t n) {
    require(n > 0, "cascade_macs: N must be positive");
    require(!stages.empty() && reached.size() == stages.size(), "cascade_macs: dimension mismatch");
    require(reached[0] == n, "cascade_macs: every sample reaches the first stage");
    for (std::size_t s = 1; s < reached.size(); ++s)
        if (reached[s] > reached[s - 1]) throw ValidationError("cascade_macs: n_exp exceeds the samples reaching the previous stage");

    double total = 0.0;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        if (!stages[s].cumulative) {
            total += fraction(reached[s], n) * stages[s].macs;
            continue;
        }
        std::size_t onward = 0;
        for (std::size_t t = s + 1; t < stages.size(); ++t) {
            if (stages[t].cumulative) {
                onward = reached[t];
                break;
            }
        }
        total += fraction(reached[s] - onward, n) * stages[s].macs;
    }
    return total;
}

double cascade_macs(StageCost fast, StageCost expensive, std::size_t n_exp, std::size_t n) {
    if (n_exp > n) throw ValidationError("cascade_macs: n_exp > N");
    const StageCost stages[] = {fast, expensive};
    const std::size_t reached[] = {n, n_exp};
    return cascade_macs(stages, reached, n);
}

double low_sentinel(std::span<const double> confs) {
    require(!confs.empty(), "low_sentinel: empty input");
    const double lo = *std::min_element(confs.begin(), confs.end());
    return lo > 0.0 ? 0.0 : std::nextafter(lo, -std::numeric_limits<double>::infinity());
}

SweepCurve sweep_thresholds(std::span<const int> labels, const StageOutputs& fast, const StageOutputs& expensive) {
    const std::size_t n = labels.size();
    require(n > 0, "sweep_thresholds: empty split");
    require(fast.preds.size() == n && fast.confs.size() == n && expensive.preds.size() == n,
            "sweep_thresholds: length mismatch");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fast.confs[a] < fast.confs[b]; });

    std::size_t fast_correct = 0;
    for (std::size_t i = 0; i < n; ++i) fast_correct += fast.preds[i] == labels[i];

    SweepCurve curve;
    auto push = [&](double delta, std::size_t correct, std::size_t n_exp) {
        curve.push_back({delta, fraction(correct, n), n_exp, cascade_macs(fast.cost, expensive.cost, n_exp, n)});
    };

    push(low_sentinel(fast.confs), fast_correct, 0);
    std::size_t correct = fast_correct;
    std::size_t routed = 0;
    while (routed < n) {
        const double c = fast.confs[order[routed]];
        while (routed < n && fast.confs[order[routed]] == c) {
            const std::size_t i = order[routed++];
            correct -= fast.preds[i] == labels[i];
            correct += expensive.preds[i] == labels[i];
        }
        push(c, correct, routed);
    }
    if (curve.back().delta < 1.0) push(1.0, correct, n);
    return curve;
}

ThresholdChoice select_threshold(const SweepCurve& curve, ThresholdPolicy policy, double tolerance, double acc_exp) {
    require(!curve.empty(), "select_threshold: empty curve");
    auto max_accuracy = [&] {
        std::size_t best = 0;
        for (std::size_t k = 1; k < curve.size(); ++k) {
            const auto& p = curve[k];
            const auto& b = curve[best];
            if (p.acc_casc > b.acc_casc || (p.acc_casc == b.acc_casc && p.n_exp < b.n_exp)) best = k;
        }
        return best;
    };

    if (policy == ThresholdPolicy::max_accuracy) {
        const std::size_t k = max_accuracy();
        return {curve[k].delta, k, false};
    }
    const double target = (1.0 - tolerance) * acc_exp;
    std::size_t best = curve.size();
    for (std::size_t k = 0; k < curve.size(); ++k) {
        if (curve[k].acc_casc < target) continue;
        if (best == curve.size() || curve[k].n_exp < curve[best].n_exp) best = k;
    }
    if (best == curve.size()) {
        const std::size_t k = max_accuracy();
        return {curve[k].delta, k, true};
    }
    return {curve[best].delta, best, false};
}

void write_sweep_csv(const SweepCurve& curve, std::ostream& out) {
    out << "delta,acc_casc,n_exp,macs_casc\n";
    for (const auto& p : curve)
        out << format_real(p.delta) << ',' << format_real(p.acc_casc) << ',' << p.n_exp << ','
            << format_real(p.macs_casc) << '\n';
}

SweepCurve read_sweep_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("delta,acc_casc,n_exp,macs_casc", 0) != 0)
        throw ValidationError("malformed header: expected delta,acc_casc,n_exp,macs_casc");
    SweepCurve curve;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        std::istringstream ss(line);
        SweepPoint p;
        char c1 = 0, c2 = 0, c3 = 0;
        if (!(ss >> p.delta >> c1 >> p.acc_casc >> c2 >> p.n_exp >> c3 >> p.macs_casc) || c1 != ',' || c2 != ',' ||
            c3 != ',')
            throw FormatError("malformed sweep row", row);
        if (!curve.empty() && !(p.delta > curve.back().delta)) throw FormatError("delta not increasing", row);
        curve.push_back(p);
    }
    return curve;
}

RoutingResult route_multistage(std::span<const StageOutputs> stages, std::span<const int> labels,
                               std::span<const double> deltas) {
    const std::size_t m_count = stages.size();
    const std::size_t n = labels.size();
    require(m_count >= 2, "route_multistage: at least 2 stages required");
    require(deltas.size() == m_count - 1, "route_multistage: threshold count must be stages - 1");
    require(n > 0, "route_multistage: empty split");
    for (const auto& s : stages)
        require(s.preds.size() == n && (s.confs.size() == n || &s == &stages.back()),
                "route_multistage: stage output length mismatch");

    RoutingResult r;
    r.exit_stage.resize(n);
    r.exit_counts.assign(m_count, 0);
    r.reached_counts.assign(m_count, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t m = 0;
        while (m + 1 < m_count && !(stages[m].confs[i] > deltas[m])) ++m;
        r.exit_stage[i] = m;
        ++r.exit_counts[m];
        r.correct += stages[m].preds[i] == labels[i];
    }
    std::size_t remaining = n;
    for (std::size_t m = 0; m < m_count; ++m) {
        r.reached_counts[m] = remaining;
        remaining -= r.exit_counts[m];
    }
    std::vector<StageCost> costs(m_count);
    for (std::size_t m = 0; m < m_count; ++m) costs[m] = stages[m].cost;
    r.acc_casc = fraction(r.correct, n);
    r.macs_casc = cascade_macs(costs, r.reached_counts, n);
    return r;
}

std::vector<double> threshold_candidates(std::span<const double> confs, std::size_t cap) {
    require(!confs.empty(), "threshold_candidates: empty input");
    require(cap >= 2, "threshold_candidates: cap must be at least 2");
    std::vector<double> uniq(confs.begin(), confs.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

    std::vector<double> out;
    out.push_back(low_sentinel(confs));
    if (uniq.size() <= cap) {
        out.insert(out.end(), uniq.begin(), uniq.end());
    } else {
        for (std::size_t k = 0; k < cap; ++k) {
            const std::size_t idx = static_cast<std::size_t>(
                std::llround(static_cast<double>(k) * static_cast<double>(uniq.size() - 1) / static_cast<double>(cap - 1)));
            out.push_back(uniq[idx]);
        }
        out.erase(std::unique(out.begin(), out.end()), out.end());
    }
    if (out.back() < 1.0) out.push_back(1.0);
    return out;
}

namespace {

MultiStageChoice search_three(std::span<const StageOutputs> stages, std::span<const int> labels,
                              ThresholdPolicy policy, double target, std::size_t cap) {
    const std::size_t n = labels.size();
    const auto& s0 = stages[0];
    const auto& s1 = stages[1];
    const auto& s2 = stages[2];
    const auto cand0 = threshold_candidates(s0.confs, cap);
    const auto cand1 = threshold_candidates(s1.confs, cap);
    const StageCost costs[] = {s0.cost, s1.cost, s2.cost};

    std::vector<std::size_t> by_conf1(n);
    std::iota(by_conf1.begin(), by_conf1.end(), 0);
    std::stable_sort(by_conf1.begin(), by_conf1.end(),
                     [&](std::size_t a, std::size_t b) { return s1.confs[a] < s1.confs[b]; });

    Candidate best;
    bool have_best = false;
    double best_d0 = 0.0, best_d1 = 0.0;
    std::vector<char> reaches(n);
    for (double d0 : cand0) {
        std::size_t reached1 = 0;
        std::size_t correct_base = 0;  // exits at stage 0 plus stage-1 hits of everything reaching it
        for (std::size_t i = 0; i < n; ++i) {
            reaches[i] = !(s0.confs[i] > d0);
            if (reaches[i]) {
                ++reached1;
                correct_base += s1.preds[i] == labels[i];
            } else {
                correct_base += s0.preds[i] == labels[i];
            }
        }
        std::size_t pos = 0;
        std::size_t reached2 = 0;
        std::ptrdiff_t delta_correct = 0;
        for (double d1 : cand1) {
            while (pos < n && s1.confs[by_conf1[pos]] <= d1) {
                const std::size_t i = by_conf1[pos++];
                if (!reaches[i]) continue;
                ++reached2;
                delta_correct += static_cast<int>(s2.preds[i] == labels[i]) - static_cast<int>(s1.preds[i] == labels[i]);
            }
            Candidate c;
            c.correct = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(correct_base) + delta_correct);
            const std::size_t reached[] = {n, reached1, reached2};
            c.macs = cascade_macs(costs, reached, n);
            c.feasible = fraction(c.correct, n) >= target;
            if (!have_best || better(c, best, policy)) {
                best = c;
                best_d0 = d0;
                best_d1 = d1;
                have_best = true;
            }
        }
    }
    MultiStageChoice choice;
    choice.deltas = {best_d0, best_d1};
    choice.result = route_multistage(stages, labels, choice.deltas);
    choice.infeasible = policy == ThresholdPolicy::constrained_min_cost && !best.feasible;
    if (choice.infeasible) {
        // Fall back to the max-accuracy optimum, as the two-stage selector does.
        auto fb = search_three(stages, labels, ThresholdPolicy::max_accuracy, target, cap);
        fb.infeasible = true;
        return fb;
    }
    return choice;
}

}  // namespace

MultiStageChoice search_multistage_thresholds(std::span<const StageOutputs> stages, std::span<const int> labels,
                                              ThresholdPolicy policy, double tolerance, std::size_t cap) {
    const std::size_t m_count = stages.size();
    const std::size_t n = labels.size();
    require(m_count >= 2, "search_multistage_thresholds: at least 2 stages required");
    require(n > 0, "search_multistage_thresholds: empty split");

    std::size_t last_correct = 0;
    for (std::size_t i = 0; i < n; ++i) last_correct += stages.back().preds[i] == labels[i];
    const double acc_last = fraction(last_correct, n);
    const double target = (1.0 - tolerance) * acc_last;

    if (m_count == 2) {
        const auto curve = sweep_thresholds(labels, stages[0], stages[1]);
        const auto pick = select_threshold(curve, policy, tolerance, acc_last);
        MultiStageChoice choice;
        choice.deltas = {pick.delta};
        choice.result = route_multistage(stages, labels, choice.deltas);
        choice.infeasible = pick.infeasible;
        return choice;
    }
    if (m_count == 3) return search_three(stages, labels, policy, target, cap);

    // Greedy from the back: with every earlier threshold at 1 all samples reach
    // stage k, so each step is a sweep of stage k against the tuned tail.
    std::vector<double> deltas(m_count - 1, 1.0);
    for (std::size_t k = m_count - 1; k-- > 0;) {
        Candidate best;
        bool have_best = false;
        double best_delta = 1.0;
        auto step_policy = policy;
        for (int pass = 0; pass < 2; ++pass) {
            for (double d : threshold_candidates(stages[k].confs, cap)) {
                deltas[k] = d;
                const auto r = route_multistage(stages, labels, deltas);
                const Candidate c{r.correct, r.macs_casc, r.acc_casc >= target};
                if (!have_best || better(c, best, step_policy)) {
                    best = c;
                    best_delta = d;
                    have_best = true;
                }
            }
            if (step_policy == ThresholdPolicy::max_accuracy || best.feasible) break;
            step_policy = ThresholdPolicy::max_accuracy;
            have_best = false;
        }
        deltas[k] = best_delta;
    }
    MultiStageChoice choice;
    choice.deltas = deltas;
    choice.result = route_multistage(stages, labels, deltas);
    choice.infeasible = policy == ThresholdPolicy::constrained_min_cost && choice.result.acc_casc < target;
    return choice;
}

std::vector<StageOutputs> stage_outputs(const JoinedSplit& split, std::span<const StageCost> costs,
                                        ScoreMethod method, std::span<const double> temperatures) {
    require(costs.size() == split.num_stages(), "stage_outputs: one cost per stage required");
    require(temperatures.empty() || temperatures.size() == split.num_stages(),
            "stage_outputs: one temperature per stage required");
    std::vector<StageOutputs> out(split.num_stages());
    for (std::size_t m = 0; m < out.size(); ++m) {
        const double t = temperatures.empty() ? 1.0 : temperatures[m];
        out[m].preds = predictions(split.stages[m]);
        out[m].confs = confidences(split.stages[m], method, t);
        out[m].cost = costs[m];
    }
    return out;
}

}  // namespace casc
