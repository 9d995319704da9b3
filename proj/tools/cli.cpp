#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "cascadekit/cascade.hpp"
#include "cascadekit/confidence.hpp"
#include "cascadekit/error.hpp"
#include "cascadekit/experiment.hpp"
#include "cascadekit/io.hpp"
#include "cascadekit/ltc.hpp"
#include "cascadekit/synthetic.hpp"
#include "cascadekit/toynet.hpp"
#include "cascadekit/train.hpp"

namespace casc::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kDatasetFormat = "cascadekit-dataset";

nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string fmt(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

struct Dataset {
    fs::path dir;
    SyntheticSpec spec;

    FeatureTable split(const std::string& name) const {
        auto t = load_feature_table(dir / (name + ".csv"), spec.num_classes);
        if (t.dim != static_cast<std::size_t>(spec.dim))
            throw ValidationError(name + ".csv: feature dimension does not match dataset.json");
        return t;
    }
};

Dataset open_dataset(const fs::path& dir) {
    const auto j = read_json(dir / "dataset.json");
    if (!j.is_object() || j.value("format", "") != kDatasetFormat || !j.contains("spec"))
        throw ValidationError((dir / "dataset.json").string() + ": not a dataset manifest");
    return {dir, synthetic_spec_from_json(j["spec"])};
}

ToyNet load_net_for(const fs::path& path, const Dataset& data) {
    auto net = load_toynet(path);
    if (net.input_dim() != data.spec.dim || net.num_classes() != data.spec.num_classes)
        throw ValidationError(path.string() + ": network shape does not match the dataset");
    return net;
}

std::string curve_point(const SweepPoint& p) {
    return "delta=" + format_real(p.delta) + " acc_casc=" + fmt(p.acc_casc, 6) + " n_exp=" + std::to_string(p.n_exp) +
           " macs_casc=" + fmt(p.macs_casc, 3);
}

std::string report_text(const std::vector<SummaryRow>& summary, const std::vector<StageSummary>& stages,
                        const std::vector<ParamSweepRow>& c_sweep, const std::vector<ParamSweepRow>& w_sweep) {
    std::string s = format_summary(summary, stages);
    if (!c_sweep.empty()) s += "\n" + format_param_sweep(c_sweep);
    if (!w_sweep.empty()) s += "\n" + format_param_sweep(w_sweep);
    return s;
}

// ---- gen-data

struct GenDataOpts {
    std::string spec, out;
    std::optional<std::uint64_t> seed;
};

int gen_data(const GenDataOpts& o, std::ostream& out) {
    auto spec = synthetic_spec_from_json(read_json(o.spec));
    if (o.seed) spec.seed = *o.seed;
    validate(spec);
    const auto data = gen_synthetic(spec);

    StagedOutputs staged;
    const fs::path dir(o.out);
    nlohmann::json manifest{{"format", kDatasetFormat}, {"version", 1}, {"spec", to_json(spec)}};
    staged.add(dir / "dataset.json", manifest.dump(2) + "\n");
    const std::pair<const char*, const FeatureTable*> splits[] = {
        {"train", &data.train}, {"val", &data.val}, {"test", &data.test}};
    for (const auto& [name, table] : splits) {
        std::ostringstream s;
        write_feature_table(*table, s);
        staged.add(dir / (std::string(name) + ".csv"), s.str());
    }
    staged.commit();
    out << "wrote " << data.train.size() << " train, " << data.val.size() << " val, " << data.test.size()
        << " test samples to " << dir.string() << "\n";
    return kOk;
}

// ---- train

struct TrainOpts {
    std::string data, config, loss, partner, out, history;
    std::vector<int> hidden;
    std::vector<std::size_t> exits;
    std::optional<int> epochs;
    std::optional<double> lr, w, cost;
    std::optional<std::uint64_t> seed;
};

int train_cmd(const TrainOpts& o, std::ostream& out) {
    const auto data = open_dataset(o.data);
    TrainConfig cfg = default_experiment_config().train;
    if (!o.config.empty()) cfg = train_config_from_json(read_json(o.config), cfg);
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.lr) cfg.learning_rate = *o.lr;
    if (o.seed) cfg.seed = *o.seed;
    if (!o.loss.empty()) {
        cfg.objective.kind = o.loss == "ltc" ? LossKind::ltc : LossKind::org_only;
        if (cfg.objective.kind == LossKind::ltc && o.config.empty()) cfg.objective.w = 1.0;
    }
    if (o.w) cfg.objective.w = *o.w;
    if (o.cost) cfg.objective.cost = *o.cost;
    validate(cfg);

    ToyNet net = o.exits.empty() ? ToyNet::mlp(data.spec.dim, o.hidden, data.spec.num_classes, cfg.seed)
                                 : ToyNet::multi_exit(data.spec.dim, o.hidden, o.exits, data.spec.num_classes, cfg.seed);
    const bool cascading_ltc = cfg.objective.kind == LossKind::ltc && net.num_exits() == 1;
    if (cascading_ltc && o.partner.empty())
        throw ValidationError("--partner is required for the ltc loss on a single-exit network");
    if (!cascading_ltc && !o.partner.empty())
        throw ValidationError("--partner only applies to the ltc loss on a single-exit network");

    const auto train_split = data.split("train");
    std::vector<std::uint8_t> partner_ok;
    if (cascading_ltc) partner_ok = correctness(load_net_for(o.partner, data), train_split);

    const auto result = train(std::move(net), train_split, cfg, partner_ok);

    StagedOutputs staged;
    staged.add(o.out, to_json(result.net).dump(1) + "\n");
    if (!o.history.empty()) {
        std::ostringstream h;
        h << "epoch,learning_rate,total,l_org,l_casc\n";
        for (const auto& r : result.history)
            h << r.epoch << ',' << format_real(r.learning_rate) << ',' << format_real(r.total) << ','
              << format_real(r.l_org) << ',' << format_real(r.l_casc) << '\n';
        staged.add(o.history, h.str());
    }
    staged.commit();
    const auto macs = result.net.macs();
    out << "trained " << result.net.num_exits() << "-exit net, macs=" << macs.total;
    if (!result.history.empty()) out << ", final loss=" << fmt(result.history.back().total, 6);
    out << "\n";
    return kOk;
}

// ---- export-logits

struct ExportOpts {
    std::string net, data, split = "val", model_id, out;
    int exit = 0;
};

int export_cmd(const ExportOpts& o, std::ostream& out) {
    const auto data = open_dataset(o.data);
    const auto net = load_net_for(o.net, data);
    if (o.exit < 0 || o.exit > static_cast<int>(net.num_exits()))
        throw ValidationError("--exit must lie in [1, " + std::to_string(net.num_exits()) + "]");
    const auto features = data.split(o.split);
    const std::string id = o.model_id.empty() ? fs::path(o.out).stem().string() : o.model_id;
    const auto table = export_logits(net, features, id, o.exit - 1);
    std::ostringstream s;
    write_logit_table(table, s);
    StagedOutputs staged;
    staged.add(o.out, s.str());
    staged.commit();
    out << "wrote " << table.size() << " rows of " << table.num_classes() << " logits to " << o.out << "\n";
    return kOk;
}

// ---- calibrate

struct CalibrateOpts {
    std::string val, out, apply, apply_out;
    int bins = kDefaultEceBins;
};

int calibrate_cmd(const CalibrateOpts& o, std::ostream& out) {
    if (o.apply.empty() != o.apply_out.empty()) throw ValidationError("--apply and --apply-out go together");
    if (o.bins < 1) throw ValidationError("--bins must be positive");
    const auto val = load_logit_table(o.val);
    if (val.empty()) throw ValidationError(o.val + ": empty table");
    std::optional<LogitTable> target;
    if (!o.apply.empty()) target = load_logit_table(o.apply);

    const double t = fit_temperature(val);
    const double nll0 = mean_nll(val, 1.0), nll1 = mean_nll(val, t);
    const double ece0 = ece(val, o.bins);
    const auto scaled = apply_temperature(val, t);
    const double ece1 = ece(scaled, o.bins);

    StagedOutputs staged;
    if (!o.out.empty()) {
        nlohmann::json j{{"model_id", val.model_id()}, {"temperature", t},   {"nll_before", nll0},
                         {"nll_after", nll1},         {"ece_before", ece0}, {"ece_after", ece1},
                         {"ece_bins", o.bins}};
        staged.add(o.out, j.dump(2) + "\n");
    }
    if (target) {
        std::ostringstream s;
        write_logit_table(apply_temperature(*target, t), s);
        staged.add(o.apply_out, s.str());
    }
    staged.commit();
    out << "temperature=" << format_real(t) << "\n"
        << "nll: " << fmt(nll0, 6) << " -> " << fmt(nll1, 6) << "\n"
        << "ece(" << o.bins << " bins): " << fmt(ece0, 6) << " -> " << fmt(ece1, 6) << "\n";
    return kOk;
}

// ---- sweep

struct SweepOpts {
    std::vector<std::string> val;
    std::vector<double> macs;
    std::string spec, method, out;
    bool cumulative = false;
    std::optional<double> epsilon;
};

int sweep_cmd(const SweepOpts& o, std::ostream& out) {
    std::vector<fs::path> paths;
    std::vector<StageCost> costs;
    ScoreMethod method = ScoreMethod::max_prob;
    double epsilon = kDefaultTolerance;
    if (!o.spec.empty()) {
        const auto spec = validate_spec(read_json(o.spec));
        if (spec.num_stages() != 2) throw ValidationError("sweep handles two-stage cascades; the spec has " +
                                                          std::to_string(spec.num_stages()) + " stages");
        const auto base = fs::path(o.spec).parent_path();
        for (const auto& s : spec.stages) {
            if (s.logits_path.empty()) throw ValidationError("stage '" + s.profile.model_id() + "' has no logits path");
            paths.push_back(resolve(base, s.logits_path));
            costs.push_back({s.profile.macs(), s.cumulative_cost});
        }
        if (!o.val.empty()) paths = {o.val.begin(), o.val.end()};
        method = spec.scoring;
        epsilon = spec.tolerance;
    } else {
        if (o.val.size() != 2) throw ValidationError("--val takes exactly two logit files (fast, expensive)");
        if (o.macs.size() != 2) throw ValidationError("--macs takes exactly two values (fast, expensive)");
        for (std::size_t k = 0; k < 2; ++k) {
            paths.emplace_back(o.val[k]);
            ModelProfile check("stage" + std::to_string(k + 1), o.macs[k]);
            costs.push_back({o.macs[k], o.cumulative});
        }
    }
    if (!o.method.empty()) method = parse_score_method(o.method);
    if (o.epsilon) epsilon = *o.epsilon;
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must lie in [0,1]");

    std::vector<LogitTable> tables;
    for (const auto& p : paths) tables.push_back(load_logit_table(p));
    for (std::size_t k = 0; k < tables.size(); ++k)
        if (tables[k].empty()) throw ValidationError(paths[k].string() + ": empty table");
    const auto split = join_tables(tables);
    const auto outputs = stage_outputs(split, costs, method, std::vector<double>(2, 1.0));
    const auto curve = sweep_thresholds(split.labels, outputs[0], outputs[1]);
    const double acc_exp = accuracy(split.stages[1]);
    const auto best = select_threshold(curve, ThresholdPolicy::max_accuracy, epsilon, acc_exp);
    const auto cheap = select_threshold(curve, ThresholdPolicy::constrained_min_cost, epsilon, acc_exp);

    std::ostringstream s;
    write_sweep_csv(curve, s);
    StagedOutputs staged;
    staged.add(o.out, s.str());
    staged.commit();

    out << "points=" << curve.size() << " scoring=" << to_string(method) << "\n"
        << "max_accuracy: " << curve_point(curve[best.index]) << "\n"
        << "constrained_min_cost(epsilon=" << format_real(epsilon) << "): " << curve_point(curve[cheap.index])
        << (cheap.infeasible ? " infeasible" : "") << "\n";
    return kOk;
}

// ---- select

struct SelectOpts {
    std::string curve, policy = "max_accuracy", out;
    double epsilon = kDefaultTolerance;
    std::optional<double> acc_exp;
};

int select_cmd(const SelectOpts& o, std::ostream& out) {
    const auto policy = parse_threshold_policy(o.policy);
    if (!(o.epsilon >= 0.0 && o.epsilon <= 1.0)) throw ValidationError("epsilon must lie in [0,1]");
    std::istringstream in(read_file(o.curve));
    const auto curve = read_sweep_csv(in);
    if (curve.empty()) throw ValidationError(o.curve + ": empty curve");
    // The last curve point routes every sample to the expensive model.
    const double acc_exp = o.acc_exp ? *o.acc_exp : curve.back().acc_casc;
    if (!(acc_exp >= 0.0 && acc_exp <= 1.0)) throw ValidationError("--acc-exp must lie in [0,1]");
    const auto choice = select_threshold(curve, policy, o.epsilon, acc_exp);
    const auto& p = curve[choice.index];
    if (!o.out.empty()) {
        nlohmann::json j{{"policy", to_string(policy)}, {"epsilon", o.epsilon},     {"acc_exp", acc_exp},
                         {"delta", p.delta},            {"acc_casc", p.acc_casc},   {"n_exp", p.n_exp},
                         {"macs_casc", p.macs_casc},    {"infeasible", choice.infeasible}};
        StagedOutputs staged;
        staged.add(o.out, j.dump(2) + "\n");
        staged.commit();
    }
    out << to_string(policy) << ": " << curve_point(p) << (choice.infeasible ? " infeasible" : "") << "\n";
    return kOk;
}

// ---- evaluate

struct EvaluateOpts {
    std::string spec, out, assignments;
    std::vector<std::string> logits;
    std::vector<double> deltas;
};

int evaluate_cmd(const EvaluateOpts& o, std::ostream& out) {
    const auto spec = validate_spec(read_json(o.spec));
    const auto base = fs::path(o.spec).parent_path();
    const std::size_t m = spec.num_stages();
    if (!o.logits.empty() && o.logits.size() != m)
        throw ValidationError("--logits needs one file per stage (" + std::to_string(m) + ")");
    if (!o.deltas.empty() && o.deltas.size() != m - 1)
        throw ValidationError("threshold count mismatch: expected " + std::to_string(m - 1));
    for (double d : o.deltas)
        if (!(d >= 0.0 && d <= 1.0)) throw ValidationError("thresholds must lie in [0,1]");
    const auto deltas = o.deltas.empty() ? spec.thresholds : o.deltas;

    std::vector<LogitTable> tables;
    std::vector<StageCost> costs;
    for (std::size_t k = 0; k < m; ++k) {
        const auto& s = spec.stages[k];
        fs::path p;
        if (!o.logits.empty())
            p = o.logits[k];
        else if (!s.logits_path.empty())
            p = resolve(base, s.logits_path);
        else
            throw ValidationError("stage '" + s.profile.model_id() + "' has no logits path");
        tables.push_back(load_logit_table(p, s.profile.model_id()));
        if (tables.back().empty()) throw ValidationError(p.string() + ": empty table");
        costs.push_back({s.profile.macs(), s.cumulative_cost});
    }
    const auto split = join_tables(tables);
    const auto outputs = stage_outputs(split, costs, spec.scoring, std::vector<double>(m, 1.0));
    const auto r = route_multistage(outputs, split.labels, deltas);

    StagedOutputs staged;
    if (!o.out.empty()) {
        nlohmann::json j{{"thresholds", deltas},          {"scoring", to_string(spec.scoring)},
                         {"num_samples", r.num_samples()}, {"correct", r.correct},
                         {"acc_casc", r.acc_casc},         {"macs_casc", r.macs_casc},
                         {"exit_counts", r.exit_counts},   {"reached_counts", r.reached_counts}};
        staged.add(o.out, j.dump(2) + "\n");
    }
    if (!o.assignments.empty()) {
        std::ostringstream s;
        s << "sample_id,label,exit_stage,pred,correct\n";
        for (std::size_t i = 0; i < r.num_samples(); ++i) {
            const int pred = outputs[r.exit_stage[i]].preds[i];
            s << split.sample_ids[i] << ',' << split.labels[i] << ',' << r.exit_stage[i] + 1 << ',' << pred << ','
              << (pred == split.labels[i] ? 1 : 0) << '\n';
        }
        staged.add(o.assignments, s.str());
    }
    staged.commit();

    out << "samples=" << r.num_samples() << " acc_casc=" << fmt(r.acc_casc, 6) << " macs_casc=" << fmt(r.macs_casc, 3)
        << "\n";
    for (std::size_t k = 0; k < m; ++k)
        out << "stage " << k + 1 << " (" << spec.stages[k].profile.model_id() << "): reached=" << r.reached_counts[k]
            << " exited=" << r.exit_counts[k] << "\n";
    return kOk;
}

// ---- experiment / report

struct ExperimentOpts {
    std::string config, out;
    std::size_t seeds = 5;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> methods;
};

int experiment_cmd(const ExperimentOpts& o, std::ostream& out, std::ostream& err) {
    auto raw = read_json(o.config);
    if (!raw.is_object()) throw ValidationError(o.config + ": experiment config must be an object");
    if (o.seed) raw["seed"] = *o.seed;
    if (!o.methods.empty()) raw["methods"] = o.methods;
    const auto config = experiment_config_from_json(raw);
    if (o.seeds < 1) throw ValidationError("--seeds must be at least 1");
    for (const auto& w : cost_warnings(config.cost)) err << "warning: " << w << "\n";

    const auto report = run_experiment(config, o.seeds);
    StagedOutputs staged;
    stage_report(report, o.out, staged);
    staged.commit();
    out << report_text(report.summary, report.stages, report.c_sweep, report.w_sweep);
    return kOk;
}

struct ReportOpts {
    std::string dir;
};

int report_cmd(const ReportOpts& o, std::ostream& out) {
    const fs::path dir(o.dir);
    std::istringstream summary(read_file(dir / "summary.csv")), stages(read_file(dir / "stages.csv"));
    const auto rows = read_summary_csv(summary);
    const auto st = read_stage_csv(stages);
    std::vector<ParamSweepRow> c_sweep, w_sweep;
    if (fs::exists(dir / "c_sweep.csv")) {
        std::istringstream in(read_file(dir / "c_sweep.csv"));
        c_sweep = read_param_sweep_csv(in);
    }
    if (fs::exists(dir / "w_sweep.csv")) {
        std::istringstream in(read_file(dir / "w_sweep.csv"));
        w_sweep = read_param_sweep_csv(in);
    }
    out << report_text(rows, st, c_sweep, w_sweep);
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Confidence-routed cascade inference and LtC training toolkit", "cascadekit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "cascadekit 0.1.0");

    GenDataOpts gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic blob dataset (train/val/test feature tables)");
    gen_cmd->add_option("--spec", gen.spec, "Synthetic data spec (JSON)")->required();
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--seed", gen.seed, "Override the spec seed");

    TrainOpts tr;
    auto* train_sub = app.add_subcommand("train", "Train a toy MLP (single- or multi-exit)");
    train_sub->add_option("--data", tr.data, "Dataset directory from gen-data")->required();
    train_sub->add_option("--hidden", tr.hidden, "Hidden layer widths")->required()->delimiter(',');
    train_sub->add_option("--exits", tr.exits, "Exit attach positions (1-based hidden layers) for a multi-exit net")
        ->delimiter(',');
    train_sub->add_option("--config", tr.config, "Training config (JSON)");
    train_sub->add_option("--epochs", tr.epochs);
    train_sub->add_option("--lr", tr.lr, "Initial learning rate");
    train_sub->add_option("--seed", tr.seed, "Init and shuffle seed");
    train_sub->add_option("--loss", tr.loss)->check(CLI::IsMember({"org_only", "ltc"}));
    train_sub->add_option("--w", tr.w, "LtC loss weight");
    train_sub->add_option("--C", tr.cost, "LtC routing cost");
    train_sub->add_option("--partner", tr.partner, "Frozen successor net (cascading LtC)");
    train_sub->add_option("--out", tr.out, "Output net (JSON)")->required();
    train_sub->add_option("--history", tr.history, "Per-epoch loss history (CSV)");

    ExportOpts ex;
    auto* export_sub = app.add_subcommand("export-logits", "Write a logit table for one split");
    export_sub->add_option("--net", ex.net)->required();
    export_sub->add_option("--data", ex.data, "Dataset directory")->required();
    export_sub->add_option("--split", ex.split)->check(CLI::IsMember({"train", "val", "test"}));
    export_sub->add_option("--exit", ex.exit, "Exit index, 1-based (default: last)");
    export_sub->add_option("--model-id", ex.model_id);
    export_sub->add_option("--out", ex.out)->required();

    CalibrateOpts cal;
    auto* cal_sub = app.add_subcommand("calibrate", "Fit a temperature on validation logits");
    cal_sub->add_option("--val", cal.val)->required();
    cal_sub->add_option("--bins", cal.bins, "ECE bins");
    cal_sub->add_option("--out", cal.out, "Write the fit (JSON)");
    cal_sub->add_option("--apply", cal.apply, "Logit table to rescale with the fitted temperature");
    cal_sub->add_option("--apply-out", cal.apply_out);

    SweepOpts sw;
    auto* sweep_sub = app.add_subcommand("sweep", "Exact threshold sweep of a two-stage cascade");
    sweep_sub->add_option("--val", sw.val, "Validation logits: fast then expensive");
    sweep_sub->add_option("--macs", sw.macs, "MACs of the fast and expensive model");
    sweep_sub->add_option("--spec", sw.spec, "Cascade spec (JSON) supplying stages and defaults");
    sweep_sub->add_option("--method", sw.method, "Confidence score")->check(CLI::IsMember({"max_prob", "neg_entropy"}));
    sweep_sub->add_flag("--cumulative", sw.cumulative, "Expensive MACs already include the fast stage");
    sweep_sub->add_option("--epsilon", sw.epsilon, "Tolerance of the constrained policy");
    sweep_sub->add_option("--out", sw.out, "Curve CSV")->required();

    SelectOpts sel;
    auto* select_sub = app.add_subcommand("select", "Pick a threshold from a sweep curve");
    select_sub->add_option("--curve", sel.curve)->required();
    select_sub->add_option("--policy", sel.policy)->check(CLI::IsMember({"max_accuracy", "constrained_min_cost"}));
    select_sub->add_option("--epsilon", sel.epsilon);
    select_sub->add_option("--acc-exp", sel.acc_exp, "Expensive-model accuracy (default: the curve's delta=1 point)");
    select_sub->add_option("--out", sel.out, "Write the choice (JSON)");

    EvaluateOpts ev;
    auto* eval_sub = app.add_subcommand("evaluate", "Route a split through an M-stage cascade");
    eval_sub->add_option("--spec", ev.spec, "Cascade spec (JSON)")->required();
    eval_sub->add_option("--logits", ev.logits, "Per-stage logit tables overriding the spec paths");
    eval_sub->add_option("--delta", ev.deltas, "Thresholds overriding the spec")->delimiter(',');
    eval_sub->add_option("--out", ev.out, "Metrics (JSON)");
    eval_sub->add_option("--assignments", ev.assignments, "Per-sample exits (CSV)");

    ExperimentOpts xp;
    auto* exp_sub = app.add_subcommand("experiment", "Train, calibrate, select and evaluate over several seeds");
    exp_sub->add_option("--config", xp.config, "Experiment config (JSON)")->required();
    exp_sub->add_option("--seeds", xp.seeds, "Number of seeds");
    exp_sub->add_option("--seed", xp.seed, "Base seed override");
    exp_sub->add_option("--methods", xp.methods, "Methods override")->delimiter(',');
    exp_sub->add_option("--out", xp.out, "Report directory")->required();

    ReportOpts rep;
    auto* report_sub = app.add_subcommand("report", "Print the tables of an experiment report directory");
    report_sub->add_option("--dir", rep.dir)->required();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }

    try {
        if (gen_cmd->parsed()) return gen_data(gen, out);
        if (train_sub->parsed()) return train_cmd(tr, out);
        if (export_sub->parsed()) return export_cmd(ex, out);
        if (cal_sub->parsed()) return calibrate_cmd(cal, out);
        if (sweep_sub->parsed()) return sweep_cmd(sw, out);
        if (select_sub->parsed()) return select_cmd(sel, out);
        if (eval_sub->parsed()) return evaluate_cmd(ev, out);
        if (exp_sub->parsed()) return experiment_cmd(xp, out, err);
        if (report_sub->parsed()) return report_cmd(rep, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}

}  // namespace casc::cli
