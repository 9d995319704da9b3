#include "cascadekit/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "cascadekit/confidence.hpp"
#include "cascadekit/error.hpp"
#include "cascadekit/ltc.hpp"

namespace casc {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return splitmix(splitmix(base) ^ splitmix(a * 0x100000001b3ULL + b));
}

constexpr std::uint64_t kDataStream = 0xda7a;
constexpr std::uint64_t kInitStream = 0x1717;
constexpr std::uint64_t kOrderStream = 0x0d0d;

const std::vector<std::string> kKnownMethods{"baseline", "temp_scaling", "ltc"};

}  // namespace

ExperimentConfig default_experiment_config() {
    ExperimentConfig c;
    c.name = "default";
    c.data.num_classes = 8;
    c.data.dim = 8;
    c.data.n_train = 1000;
    c.data.n_val = 10000;
    c.data.n_test = 10000;
    c.data.separation = 3.5;
    c.data.clusters_per_class = 2;
    c.data.noise = 1.0;
    c.stages = {{"fast", {8}, nlohmann::json::object()}, {"expensive", {64, 64}, nlohmann::json::object()}};
    c.train.epochs = 100;
    c.train.batch_size = 128;
    c.train.learning_rate = 0.1;
    c.train.lr_decay = 0.2;
    c.train.decay_epochs = {30, 60, 80};
    c.train.momentum = 0.9;
    c.train.weight_decay = 5e-4;
    c.w_grid = {0.5, 1.0, 2.0, 4.0, 8.0};
    c.sweep_w = 4.0;
    c.c_sweep = {0.1, 0.3, 0.5, 0.7, 0.9};
    c.w_sweep = {0.5, 1.0, 2.0, 4.0, 8.0};
    return c;
}

namespace {

std::vector<int> int_list(const nlohmann::json& j, const char* what) {
    if (!j.is_array()) throw ValidationError(std::string(what) + " must be an array");
    std::vector<int> out;
    for (const auto& v : j) {
        if (!v.is_number_integer() || v.get<int>() < 1)
            throw ValidationError(std::string(what) + " entries must be positive integers");
        out.push_back(v.get<int>());
    }
    return out;
}

std::vector<double> real_list(const nlohmann::json& j, const char* what) {
    std::vector<double> out;
    if (j.is_number()) return {j.get<double>()};
    if (!j.is_array()) throw ValidationError(std::string(what) + " must be a number or an array");
    for (const auto& v : j) {
        if (!v.is_number()) throw ValidationError(std::string(what) + " entries must be numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const nlohmann::json& raw) {
    if (!raw.is_object()) throw ValidationError("experiment config must be an object");
    ExperimentConfig c = default_experiment_config();
    try {
        c.name = raw.value("name", c.name);
        if (raw.contains("setting")) {
            const auto s = raw["setting"].get<std::string>();
            if (s == "cascading")
                c.setting = Setting::cascading;
            else if (s == "splitting")
                c.setting = Setting::splitting;
            else
                throw ValidationError("setting must be cascading or splitting");
        }
        if (raw.contains("data")) {
            nlohmann::json merged = to_json(c.data);
            merged.update(raw["data"]);
            c.data = synthetic_spec_from_json(merged);
        }
        if (raw.contains("train")) c.train = train_config_from_json(raw["train"], c.train);
        if (raw.contains("stages")) {
            c.stages.clear();
            const auto& st = raw["stages"];
            if (!st.is_array()) throw ValidationError("stages must be an array");
            for (std::size_t m = 0; m < st.size(); ++m) {
                StageArch a;
                a.model_id = st[m].value("model_id", "stage" + std::to_string(m + 1));
                a.hidden = int_list(st[m].at("hidden"), "hidden");
                if (st[m].contains("train")) {
                    a.train_overrides = st[m]["train"];
                    train_config_from_json(a.train_overrides, c.train);
                }
                c.stages.push_back(std::move(a));
            }
        }
        if (raw.contains("splitting")) {
            const auto& sp = raw["splitting"];
            c.splitting.trunk = int_list(sp.at("trunk"), "splitting.trunk");
            c.splitting.exits.clear();
            for (int e : int_list(sp.at("exits"), "splitting.exits")) c.splitting.exits.push_back(static_cast<std::size_t>(e));
        }
        if (raw.contains("methods")) c.methods = raw["methods"].get<std::vector<std::string>>();
        if (raw.contains("C")) c.cost = raw["C"].get<double>();
        if (raw.contains("w")) c.w_grid = real_list(raw["w"], "w");
        if (raw.contains("sweep_w")) c.sweep_w = raw["sweep_w"].get<double>();
        if (raw.contains("epsilon")) c.tolerance = raw["epsilon"].get<double>();
        if (raw.contains("scoring")) c.scoring = parse_score_method(raw["scoring"].get<std::string>());
        if (raw.contains("policy")) c.policy = parse_threshold_policy(raw["policy"].get<std::string>());
        c.seed = raw.value("seed", c.seed);
        if (raw.contains("c_sweep")) c.c_sweep = real_list(raw["c_sweep"], "c_sweep");
        if (raw.contains("w_sweep")) c.w_sweep = real_list(raw["w_sweep"], "w_sweep");
        c.histogram_bins = raw.value("histogram_bins", c.histogram_bins);
        c.candidate_cap = raw.value("candidate_cap", c.candidate_cap);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("experiment config: ") + e.what());
    }

    if (c.setting == Setting::cascading && c.stages.size() < 2)
        throw ValidationError("at least 2 stages required for model cascading");
    if (c.setting == Setting::splitting) {
        if (c.splitting.exits.size() < 2) throw ValidationError("at least 2 exits required for model splitting");
        for (std::size_t e = 1; e < c.splitting.exits.size(); ++e)
            if (c.splitting.exits[e] <= c.splitting.exits[e - 1])
                throw ValidationError("splitting exits must be strictly increasing");
        if (c.splitting.exits.back() != c.splitting.trunk.size())
            throw ValidationError("the last splitting exit must follow the final trunk layer");
    }
    if (c.methods.empty()) throw ValidationError("at least one method required");
    for (const auto& m : c.methods)
        if (std::find(kKnownMethods.begin(), kKnownMethods.end(), m) == kKnownMethods.end())
            throw ValidationError("unknown method '" + m + "' (expected baseline, temp_scaling or ltc)");
    if (!(c.cost >= 0.0)) throw ValidationError("C must be non-negative");
    if (c.w_grid.empty()) throw ValidationError("w must list at least one value");
    for (double w : c.w_grid)
        if (!(w >= 0.0)) throw ValidationError("w must be non-negative");
    for (double v : c.c_sweep)
        if (!(v >= 0.0)) throw ValidationError("c_sweep values must be non-negative");
    for (double v : c.w_sweep)
        if (!(v >= 0.0)) throw ValidationError("w_sweep values must be non-negative");
    if (!(c.sweep_w >= 0.0)) throw ValidationError("sweep_w must be non-negative");
    if (!(c.tolerance >= 0.0 && c.tolerance <= 1.0)) throw ValidationError("epsilon must lie in [0,1]");
    if (c.histogram_bins < 1) throw ValidationError("histogram_bins must be positive");
    if (c.candidate_cap < 2) throw ValidationError("candidate_cap must be at least 2");
    return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["name"] = c.name;
    j["setting"] = c.setting == Setting::cascading ? "cascading" : "splitting";
    j["data"] = to_json(c.data);
    j["train"] = to_json(c.train);
    j["train"].erase("loss");
    j["train"].erase("w");
    j["train"].erase("C");
    j["stages"] = nlohmann::json::array();
    for (const auto& s : c.stages) {
        nlohmann::json st{{"model_id", s.model_id}, {"hidden", s.hidden}};
        if (!s.train_overrides.empty()) st["train"] = s.train_overrides;
        j["stages"].push_back(std::move(st));
    }
    if (c.setting == Setting::splitting) j["splitting"] = {{"trunk", c.splitting.trunk}, {"exits", c.splitting.exits}};
    j["methods"] = c.methods;
    j["C"] = c.cost;
    j["w"] = c.w_grid;
    j["sweep_w"] = c.sweep_w;
    j["epsilon"] = c.tolerance;
    j["scoring"] = to_string(c.scoring);
    j["policy"] = to_string(c.policy);
    j["seed"] = c.seed;
    j["c_sweep"] = c.c_sweep;
    j["w_sweep"] = c.w_sweep;
    j["histogram_bins"] = c.histogram_bins;
    j["candidate_cap"] = c.candidate_cap;
    return j;
}

const char* to_string(Case c) {
    switch (c) {
        case Case::both_correct: return "both_correct";
        case Case::fast_only: return "fast_only_correct";
        case Case::exp_only: return "exp_only_correct";
        case Case::both_wrong: return "both_wrong";
    }
    return "?";
}

FourCaseHistogram four_case_histogram(std::span<const double> confs, std::span<const std::uint8_t> fast_correct,
                                      std::span<const std::uint8_t> exp_correct, int bins) {
    if (bins < 1) throw ValidationError("histogram: bins must be positive");
    if (confs.size() != fast_correct.size() || confs.size() != exp_correct.size())
        throw ValidationError("histogram: length mismatch");
    FourCaseHistogram h;
    h.bins = bins;
    for (auto& c : h.counts) c.assign(static_cast<std::size_t>(bins), 0);
    for (std::size_t i = 0; i < confs.size(); ++i) {
        const int which = fast_correct[i] ? (exp_correct[i] ? 0 : 1) : (exp_correct[i] ? 2 : 3);
        const int bin = std::clamp(static_cast<int>(confs[i] * bins), 0, bins - 1);
        ++h.counts[static_cast<std::size_t>(which)][static_cast<std::size_t>(bin)];
    }
    return h;
}

MeanSe mean_se(std::span<const double> values) {
    MeanSe r;
    r.n = values.size();
    if (values.empty()) return r;
    double sum = 0.0;
    for (double v : values) sum += v;
    r.mean = sum / static_cast<double>(r.n);
    if (r.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - r.mean) * (v - r.mean);
        r.se = std::sqrt(ss / static_cast<double>(r.n - 1)) / std::sqrt(static_cast<double>(r.n));
    }
    return r;
}

namespace {

struct Evaluated {
    MethodOutcome outcome;
};

// Fits thresholds on validation and measures the test split for one set of
// per-stage logits.
MethodOutcome evaluate_cascade(const std::vector<LogitTable>& val, const std::vector<LogitTable>& test,
                               const std::vector<StageCost>& costs, const std::vector<double>& temperatures,
                               const ExperimentConfig& cfg) {
    const auto val_split = join_tables(val);
    const auto test_split = join_tables(test);
    const auto val_out = stage_outputs(val_split, costs, cfg.scoring, temperatures);
    const auto test_out = stage_outputs(test_split, costs, cfg.scoring, temperatures);

    MethodOutcome o;
    o.temperatures = temperatures;
    if (val_out.size() == 2) {
        o.val_curve = sweep_thresholds(val_split.labels, val_out[0], val_out[1]);
        const double acc_exp = accuracy(val_split.stages[1]);
        const auto pick = select_threshold(o.val_curve, cfg.policy, cfg.tolerance, acc_exp);
        o.deltas = {pick.delta};
        o.infeasible = pick.infeasible;
    } else {
        const auto pick = search_multistage_thresholds(val_out, val_split.labels, cfg.policy, cfg.tolerance,
                                                       cfg.candidate_cap);
        o.deltas = pick.deltas;
        o.infeasible = pick.infeasible;
    }
    const auto vr = route_multistage(val_out, val_split.labels, o.deltas);
    const auto tr = route_multistage(test_out, test_split.labels, o.deltas);
    o.val_acc = vr.acc_casc;
    o.val_macs = vr.macs_casc;
    o.test_acc = tr.acc_casc;
    o.test_macs = tr.macs_casc;
    o.test_n_exp_frac = static_cast<double>(tr.reached_counts[1]) / static_cast<double>(tr.num_samples());
    o.exit_counts = tr.exit_counts;
    for (const auto& t : test_split.stages) o.stage_test_accuracy.push_back(accuracy(t));

    std::vector<std::uint8_t> fast_ok(test_split.size()), exp_ok(test_split.size());
    for (std::size_t i = 0; i < test_split.size(); ++i) {
        fast_ok[i] = test_out[0].preds[i] == test_split.labels[i];
        exp_ok[i] = test_out[1].preds[i] == test_split.labels[i];
    }
    o.histogram = four_case_histogram(test_out[0].confs, fast_ok, exp_ok, cfg.histogram_bins);
    return o;
}

// Everything one seed needs: data and the trained chains.
class SeedRun {
public:
    SeedRun(const ExperimentConfig& cfg, std::size_t seed_index)
        : cfg_(cfg), seed_index_(seed_index) {
        SyntheticSpec spec = cfg.data;
        spec.seed = derive_seed(cfg.data.seed ^ cfg.seed, seed_index, kDataStream);
        data_ = gen_synthetic(spec);
    }

    void run(std::vector<MethodOutcome>& outcomes, std::map<std::pair<std::string, double>, std::vector<MethodOutcome>>& sweeps,
             std::vector<std::vector<double>>& stage_acc) {
        if (cfg_.setting == Setting::cascading)
            run_cascading(outcomes, sweeps, stage_acc);
        else
            run_splitting(outcomes, sweeps, stage_acc);
    }

    std::vector<StageCost> costs() const { return costs_; }

private:
    TrainConfig stage_config(std::size_t stage, Objective objective) const {
        TrainConfig t = cfg_.train;
        if (cfg_.setting == Setting::cascading && !cfg_.stages[stage].train_overrides.empty())
            t = train_config_from_json(cfg_.stages[stage].train_overrides, t);
        t.seed = derive_seed(cfg_.seed, seed_index_ * 64 + stage, kOrderStream);
        t.objective = objective;
        return t;
    }

    std::uint64_t init_seed(std::size_t stage) const {
        return derive_seed(cfg_.seed, seed_index_ * 64 + stage, kInitStream);
    }

    ToyNet fresh_stage(std::size_t stage) const {
        const auto& a = cfg_.stages[stage];
        return ToyNet::mlp(cfg_.data.dim, a.hidden, cfg_.data.num_classes, init_seed(stage));
    }

    ToyNet fresh_split() const {
        return ToyNet::multi_exit(cfg_.data.dim, cfg_.splitting.trunk, cfg_.splitting.exits, cfg_.data.num_classes,
                                  init_seed(0));
    }

    std::vector<LogitTable> tables(const std::vector<ToyNet>& chain, const FeatureTable& split) const {
        std::vector<LogitTable> out;
        if (cfg_.setting == Setting::splitting) return export_all_logits(chain[0], split, "split");
        for (std::size_t m = 0; m < chain.size(); ++m) out.push_back(export_logits(chain[m], split, cfg_.stages[m].model_id));
        return out;
    }

    MethodOutcome evaluate(const std::vector<ToyNet>& chain, const std::vector<double>& temperatures) const {
        return evaluate_cascade(tables(chain, data_.val), tables(chain, data_.test), costs_, temperatures, cfg_);
    }

    std::vector<double> fit_temperatures(const std::vector<ToyNet>& chain) const {
        const auto val = tables(chain, data_.val);
        std::vector<double> t(val.size(), 1.0);
        for (std::size_t m = 0; m + 1 < val.size(); ++m) t[m] = fit_temperature(val[m]);
        return t;
    }

    // Validation-only choice among LtC candidates: the cheapest one whose
    // validation accuracy is at least the reference's, else the most accurate.
    static std::size_t pick_w(const std::vector<MethodOutcome>& candidates, double reference_acc) {
        std::size_t best = candidates.size();
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            if (candidates[k].val_acc < reference_acc) continue;
            if (best == candidates.size() || candidates[k].val_macs < candidates[best].val_macs) best = k;
        }
        if (best != candidates.size()) return best;
        best = 0;
        for (std::size_t k = 1; k < candidates.size(); ++k) {
            const auto& c = candidates[k];
            const auto& b = candidates[best];
            if (c.val_acc > b.val_acc || (c.val_acc == b.val_acc && c.val_macs < b.val_macs)) best = k;
        }
        return best;
    }

    void record_methods(const std::vector<ToyNet>& org, const std::vector<ToyNet>& ltc, double chosen_w,
                        std::vector<MethodOutcome>& outcomes) const {
        for (const auto& method : cfg_.methods) {
            MethodOutcome o;
            if (method == "baseline") {
                o = evaluate(org, std::vector<double>(costs_.size(), 1.0));
            } else if (method == "temp_scaling") {
                o = evaluate(org, fit_temperatures(org));
            } else {
                o = evaluate(ltc, std::vector<double>(costs_.size(), 1.0));
                o.w = chosen_w;
                o.cost = cfg_.cost;
            }
            o.method = method;
            o.seed_index = seed_index_;
            outcomes.push_back(std::move(o));
        }
    }

    void run_cascading(std::vector<MethodOutcome>& outcomes,
                       std::map<std::pair<std::string, double>, std::vector<MethodOutcome>>& sweeps,
                       std::vector<std::vector<double>>& stage_acc) {
        const std::size_t m_count = cfg_.stages.size();
        std::vector<ToyNet> org(m_count);
        costs_.assign(m_count, {});
        for (std::size_t m = m_count; m-- > 0;) {
            stage_ = m;
            org[m] = train(fresh_stage(m), data_.train, stage_config(m, {})).net;
            costs_[m] = {static_cast<double>(org[m].macs().total), false};
        }
        for (std::size_t m = 0; m < m_count; ++m)
            stage_acc[m].push_back(accuracy(export_logits(org[m], data_.test, cfg_.stages[m].model_id)));

        const bool need_ltc = std::find(cfg_.methods.begin(), cfg_.methods.end(), "ltc") != cfg_.methods.end() ||
                              !cfg_.c_sweep.empty() || !cfg_.w_sweep.empty();
        std::vector<ToyNet> ltc = org;
        double chosen_w = cfg_.w_grid.front();
        if (need_ltc) {
            // Model cascading order: the last model keeps the original loss, each
            // earlier one trains against its frozen (already LtC-trained) successor.
            std::vector<ModelProfile> profiles;
            for (std::size_t m = 0; m < m_count; ++m) profiles.emplace_back(cfg_.stages[m].model_id, costs_[m].macs);
            for (const auto& step : cascading_schedule(profiles)) {
                if (step.loss == StageLoss::original) continue;
                stage_ = step.stage;
                ltc[step.stage] = train_ltc_stage(step.stage, ltc[step.partner], org[step.stage], chosen_w);
            }
        }
        record_methods(org, ltc, chosen_w, outcomes);

        for (double c : cfg_.c_sweep) {
            stage_ = 0;
            auto chain = ltc;
            chain[0] = train(fresh_stage(0), data_.train, stage_config(0, {LossKind::ltc, cfg_.sweep_w, c}),
                             cache_.get(ltc[1], data_.train)).net;
            auto o = evaluate(chain, std::vector<double>(m_count, 1.0));
            o.method = "ltc";
            o.w = cfg_.sweep_w;
            o.cost = c;
            o.seed_index = seed_index_;
            sweeps[{"C", c}].push_back(std::move(o));
        }
        for (double w : cfg_.w_sweep) {
            stage_ = 0;
            auto chain = ltc;
            chain[0] = train(fresh_stage(0), data_.train, stage_config(0, {LossKind::ltc, w, cfg_.cost}),
                             cache_.get(ltc[1], data_.train)).net;
            auto o = evaluate(chain, std::vector<double>(m_count, 1.0));
            o.method = "ltc";
            o.w = w;
            o.cost = cfg_.cost;
            o.seed_index = seed_index_;
            sweeps[{"w", w}].push_back(std::move(o));
        }
    }

    ToyNet train_ltc_stage(std::size_t stage, const ToyNet& partner, const ToyNet& org_stage, double& chosen_w) {
        const auto& partner_ok = cache_.get(partner, data_.train);
        std::vector<ToyNet> candidates;
        for (double w : cfg_.w_grid)
            candidates.push_back(
                train(fresh_stage(stage), data_.train, stage_config(stage, {LossKind::ltc, w, cfg_.cost}), partner_ok).net);
        if (candidates.size() == 1) {
            if (stage == 0) chosen_w = cfg_.w_grid.front();
            return candidates.front();
        }
        auto pair_eval = [&](const ToyNet& fast) {
            const std::vector<LogitTable> val{export_logits(fast, data_.val, "fast"), export_logits(partner, data_.val, "exp")};
            const std::vector<LogitTable> test{export_logits(fast, data_.test, "fast"),
                                               export_logits(partner, data_.test, "exp")};
            const std::vector<StageCost> pair_costs{costs_[stage], costs_[stage + 1]};
            return evaluate_cascade(val, test, pair_costs, {1.0, 1.0}, cfg_);
        };
        const double reference = pair_eval(org_stage).val_acc;
        std::vector<MethodOutcome> evals;
        for (const auto& cand : candidates) evals.push_back(pair_eval(cand));
        const std::size_t k = pick_w(evals, reference);
        if (stage == 0) chosen_w = cfg_.w_grid[k];
        return candidates[k];
    }

    void run_splitting(std::vector<MethodOutcome>& outcomes,
                       std::map<std::pair<std::string, double>, std::vector<MethodOutcome>>& sweeps,
                       std::vector<std::vector<double>>& stage_acc) {
        stage_ = 0;
        const std::vector<ToyNet> org{train(fresh_split(), data_.train, stage_config(0, {})).net};
        const auto macs = org[0].macs();
        costs_.clear();
        for (auto v : macs.per_exit_cumulative) costs_.push_back({static_cast<double>(v), true});
        const auto test_tables = tables(org, data_.test);
        for (std::size_t m = 0; m < test_tables.size(); ++m) stage_acc[m].push_back(accuracy(test_tables[m]));

        std::vector<ToyNet> ltc = org;
        double chosen_w = cfg_.w_grid.front();
        const bool need_ltc = std::find(cfg_.methods.begin(), cfg_.methods.end(), "ltc") != cfg_.methods.end();
        if (need_ltc) {
            std::vector<ToyNet> cands;
            std::vector<MethodOutcome> evals;
            for (double w : cfg_.w_grid) {
                cands.push_back(train(fresh_split(), data_.train, stage_config(0, {LossKind::ltc, w, cfg_.cost})).net);
                evals.push_back(evaluate({cands.back()}, std::vector<double>(costs_.size(), 1.0)));
            }
            std::size_t k = 0;
            if (cands.size() > 1) k = pick_w(evals, evaluate(org, std::vector<double>(costs_.size(), 1.0)).val_acc);
            ltc = {cands[k]};
            chosen_w = cfg_.w_grid[k];
        }
        record_methods(org, ltc, chosen_w, outcomes);

        auto sweep_one = [&](const char* param, double value, double w, double c) {
            const std::vector<ToyNet> net{train(fresh_split(), data_.train, stage_config(0, {LossKind::ltc, w, c})).net};
            auto o = evaluate(net, std::vector<double>(costs_.size(), 1.0));
            o.method = "ltc";
            o.w = w;
            o.cost = c;
            o.seed_index = seed_index_;
            sweeps[{param, value}].push_back(std::move(o));
        };
        for (double c : cfg_.c_sweep) sweep_one("C", c, cfg_.sweep_w, c);
        for (double w : cfg_.w_sweep) sweep_one("w", w, w, cfg_.cost);
    }

public:
    std::size_t current_stage() const noexcept { return stage_; }

private:
    const ExperimentConfig& cfg_;
    std::size_t seed_index_;
    SyntheticData data_;
    std::vector<StageCost> costs_;
    CorrectnessCache cache_;
    std::size_t stage_ = 0;
};

MeanSe collect(const std::vector<MethodOutcome>& os, double MethodOutcome::*field) {
    std::vector<double> v;
    for (const auto& o : os) v.push_back(o.*field);
    return mean_se(v);
}

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<MethodOutcome>& outcomes, const std::vector<std::string>& methods) {
    std::vector<SummaryRow> rows;
    for (const auto& m : methods) {
        std::vector<MethodOutcome> mine;
        for (const auto& o : outcomes)
            if (o.method == m) mine.push_back(o);
        if (mine.empty()) continue;
        rows.push_back({m, collect(mine, &MethodOutcome::test_acc), collect(mine, &MethodOutcome::test_macs),
                        collect(mine, &MethodOutcome::test_n_exp_frac)});
    }
    return rows;
}

ExperimentReport run_experiment(const ExperimentConfig& config, std::size_t seeds) {
    if (seeds < 1) throw ValidationError("run_experiment: at least one seed required");
    ExperimentReport report;
    report.config = config;
    report.seeds = seeds;
    const std::size_t m_count = config.num_stages();
    std::vector<std::vector<double>> stage_acc(m_count);
    std::map<std::pair<std::string, double>, std::vector<MethodOutcome>> sweeps;
    std::vector<StageCost> costs;

    for (std::size_t s = 0; s < seeds; ++s) {
        std::size_t stage = 0;
        try {
            SeedRun run(config, s);
            try {
                run.run(report.outcomes, sweeps, stage_acc);
            } catch (...) {
                stage = run.current_stage();
                throw;
            }
            costs = run.costs();
        } catch (const std::exception& e) {
            throw std::runtime_error("seed " + std::to_string(s) + ", stage " + std::to_string(stage + 1) + ": " +
                                     e.what());
        }
    }

    for (std::size_t m = 0; m < m_count; ++m) {
        StageSummary st;
        st.model_id = config.setting == Setting::cascading ? config.stages[m].model_id : "exit" + std::to_string(m + 1);
        st.macs = costs[m].macs;
        st.cumulative = costs[m].cumulative;
        st.accuracy = mean_se(stage_acc[m]);
        report.stages.push_back(std::move(st));
    }
    report.summary = summarize(report.outcomes, config.methods);
    for (const auto& [key, os] : sweeps) {
        ParamSweepRow row{key.first, key.second, collect(os, &MethodOutcome::test_acc),
                          collect(os, &MethodOutcome::test_macs), collect(os, &MethodOutcome::test_n_exp_frac)};
        (key.first == "C" ? report.c_sweep : report.w_sweep).push_back(row);
    }
    return report;
}

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string cell(const MeanSe& v, double scale, int digits) {
    std::string s = fixed(v.mean * scale, digits);
    if (v.n > 1) s += " ± " + fixed(v.se * scale, digits);
    return s;
}

// Display width counting UTF-8 code points.
std::size_t width(const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
}

std::string render(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths;
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (widths.size() <= c) widths.push_back(0);
            widths[c] = std::max(widths[c], width(r[c]));
        }
    std::ostringstream out;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        for (std::size_t c = 0; c < rows[k].size(); ++c) {
            const auto& text = rows[k][c];
            const std::string pad(widths[c] - width(text), ' ');
            out << (c == 0 ? text + pad : "  " + pad + text);
        }
        out << '\n';
        if (k == 0) {
            std::size_t total = 0;
            for (std::size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c ? 2 : 0);
            out << std::string(total, '-') << '\n';
        }
    }
    return out.str();
}

}  // namespace

std::string format_summary(const std::vector<SummaryRow>& rows, const std::vector<StageSummary>& stages) {
    std::vector<std::vector<std::string>> t{{"model", "MACs", "accuracy [%]"}};
    for (const auto& s : stages) t.push_back({s.model_id, fixed(s.macs, 0), cell(s.accuracy, 100.0, 2)});
    std::vector<std::vector<std::string>> m{{"method", "Acc^casc [%]", "MACs^casc", "n_exp/N"}};
    for (const auto& r : rows)
        m.push_back({r.method, cell(r.acc, 100.0, 2), cell(r.macs, 1.0, 1), cell(r.n_exp_frac, 1.0, 3)});
    return render(t) + "\n" + render(m);
}

std::string format_param_sweep(const std::vector<ParamSweepRow>& rows) {
    if (rows.empty()) return {};
    std::vector<std::vector<std::string>> t{{rows.front().param, "Acc^casc [%]", "MACs^casc", "n_exp/N"}};
    for (const auto& r : rows)
        t.push_back({format_real(r.value), cell(r.acc, 100.0, 2), cell(r.macs, 1.0, 1), cell(r.n_exp_frac, 1.0, 3)});
    return render(t);
}

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
    out << "method,n,acc_mean,acc_se,macs_mean,macs_se,n_exp_frac_mean,n_exp_frac_se\n";
    for (const auto& r : rows)
        out << r.method << ',' << r.acc.n << ',' << format_real(r.acc.mean) << ',' << format_real(r.acc.se) << ','
            << format_real(r.macs.mean) << ',' << format_real(r.macs.se) << ',' << format_real(r.n_exp_frac.mean) << ','
            << format_real(r.n_exp_frac.se) << '\n';
}

namespace {

std::vector<std::vector<std::string>> read_csv_rows(std::istream& in, const std::string& header) {
    std::string line;
    if (!std::getline(in, line) || line != header) throw ValidationError("malformed header: expected " + header);
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) f.push_back(item);
        rows.push_back(std::move(f));
    }
    return rows;
}

double to_real(const std::string& s, std::size_t row) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw FormatError("unparsable number", row);
        return v;
    } catch (const std::logic_error&) {
        throw FormatError("unparsable number", row);
    }
}

}  // namespace

std::vector<SummaryRow> read_summary_csv(std::istream& in) {
    const auto rows = read_csv_rows(in, "method,n,acc_mean,acc_se,macs_mean,macs_se,n_exp_frac_mean,n_exp_frac_se");
    std::vector<SummaryRow> out;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& f = rows[k];
        if (f.size() != 8) throw FormatError("expected 8 fields", k + 1);
        const auto n = static_cast<std::size_t>(to_real(f[1], k + 1));
        out.push_back({f[0],
                       {to_real(f[2], k + 1), to_real(f[3], k + 1), n},
                       {to_real(f[4], k + 1), to_real(f[5], k + 1), n},
                       {to_real(f[6], k + 1), to_real(f[7], k + 1), n}});
    }
    return out;
}

void write_stage_csv(const std::vector<StageSummary>& rows, std::ostream& out) {
    out << "model_id,macs,cumulative,n,acc_mean,acc_se\n";
    for (const auto& r : rows)
        out << r.model_id << ',' << format_real(r.macs) << ',' << (r.cumulative ? 1 : 0) << ',' << r.accuracy.n << ','
            << format_real(r.accuracy.mean) << ',' << format_real(r.accuracy.se) << '\n';
}

std::vector<StageSummary> read_stage_csv(std::istream& in) {
    const auto rows = read_csv_rows(in, "model_id,macs,cumulative,n,acc_mean,acc_se");
    std::vector<StageSummary> out;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& f = rows[k];
        if (f.size() != 6) throw FormatError("expected 6 fields", k + 1);
        StageSummary s;
        s.model_id = f[0];
        s.macs = to_real(f[1], k + 1);
        s.cumulative = f[2] == "1";
        s.accuracy = {to_real(f[4], k + 1), to_real(f[5], k + 1), static_cast<std::size_t>(to_real(f[3], k + 1))};
        out.push_back(std::move(s));
    }
    return out;
}

void write_param_sweep_csv(const std::vector<ParamSweepRow>& rows, std::ostream& out) {
    out << "param,value,n,acc_mean,acc_se,macs_mean,macs_se,n_exp_frac_mean,n_exp_frac_se\n";
    for (const auto& r : rows)
        out << r.param << ',' << format_real(r.value) << ',' << r.acc.n << ',' << format_real(r.acc.mean) << ','
            << format_real(r.acc.se) << ',' << format_real(r.macs.mean) << ',' << format_real(r.macs.se) << ','
            << format_real(r.n_exp_frac.mean) << ',' << format_real(r.n_exp_frac.se) << '\n';
}

std::vector<ParamSweepRow> read_param_sweep_csv(std::istream& in) {
    const auto rows =
        read_csv_rows(in, "param,value,n,acc_mean,acc_se,macs_mean,macs_se,n_exp_frac_mean,n_exp_frac_se");
    std::vector<ParamSweepRow> out;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& f = rows[k];
        if (f.size() != 9) throw FormatError("expected 9 fields", k + 1);
        const auto n = static_cast<std::size_t>(to_real(f[2], k + 1));
        out.push_back({f[0],
                       to_real(f[1], k + 1),
                       {to_real(f[3], k + 1), to_real(f[4], k + 1), n},
                       {to_real(f[5], k + 1), to_real(f[6], k + 1), n},
                       {to_real(f[7], k + 1), to_real(f[8], k + 1), n}});
    }
    return out;
}

void stage_report(const ExperimentReport& report, const std::filesystem::path& dir, StagedOutputs& out) {
    std::ostringstream summary, stages, per_seed, hist, csweep, wsweep;
    write_summary_csv(report.summary, summary);
    write_stage_csv(report.stages, stages);

    per_seed << "method,seed,w,C,deltas,infeasible,val_acc,val_macs,test_acc,test_macs,test_n_exp_frac,temperatures\n";
    auto joined = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ";" : "") + format_real(v[k]);
        return s;
    };
    for (const auto& o : report.outcomes)
        per_seed << o.method << ',' << o.seed_index << ',' << format_real(o.w) << ',' << format_real(o.cost) << ','
                 << joined(o.deltas) << ',' << (o.infeasible ? 1 : 0) << ',' << format_real(o.val_acc) << ','
                 << format_real(o.val_macs) << ',' << format_real(o.test_acc) << ',' << format_real(o.test_macs) << ','
                 << format_real(o.test_n_exp_frac) << ',' << joined(o.temperatures) << '\n';

    hist << "method,seed,case,bin_lo,bin_hi,count\n";
    for (const auto& o : report.outcomes) {
        const int bins = o.histogram.bins;
        for (std::size_t c = 0; c < 4; ++c)
            for (int b = 0; b < bins; ++b)
                hist << o.method << ',' << o.seed_index << ',' << to_string(static_cast<Case>(c)) << ','
                     << format_real(static_cast<double>(b) / bins) << ',' << format_real(static_cast<double>(b + 1) / bins)
                     << ',' << o.histogram.counts[c][static_cast<std::size_t>(b)] << '\n';
    }
    write_param_sweep_csv(report.c_sweep, csweep);
    write_param_sweep_csv(report.w_sweep, wsweep);

    nlohmann::json j;
    j["config"] = to_json(report.config);
    j["seeds"] = report.seeds;
    j["summary"] = nlohmann::json::array();
    for (const auto& r : report.summary)
        j["summary"].push_back({{"method", r.method},
                                {"acc_casc", {{"mean", r.acc.mean}, {"se", r.acc.se}}},
                                {"macs_casc", {{"mean", r.macs.mean}, {"se", r.macs.se}}},
                                {"n_exp_frac", {{"mean", r.n_exp_frac.mean}, {"se", r.n_exp_frac.se}}}});

    out.add(dir / "report.json", j.dump(2) + "\n");
    out.add(dir / "summary.csv", summary.str());
    out.add(dir / "stages.csv", stages.str());
    out.add(dir / "per_seed.csv", per_seed.str());
    out.add(dir / "histograms.csv", hist.str());
    if (!report.c_sweep.empty()) out.add(dir / "c_sweep.csv", csweep.str());
    if (!report.w_sweep.empty()) out.add(dir / "w_sweep.csv", wsweep.str());
    for (const auto& o : report.outcomes) {
        if (o.val_curve.empty()) continue;
        std::ostringstream curve;
        write_sweep_csv(o.val_curve, curve);
        out.add(dir / "curves" / (o.method + "-seed" + std::to_string(o.seed_index) + ".csv"), curve.str());
    }
}

}  // namespace casc
