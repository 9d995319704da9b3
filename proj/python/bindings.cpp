#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cascadekit/cascade.hpp"
#include "cascadekit/confidence.hpp"
#include "cascadekit/error.hpp"
#include "cascadekit/experiment.hpp"
#include "cascadekit/io.hpp"
#include "cascadekit/ltc.hpp"

namespace py = pybind11;
using namespace casc;

namespace {

LogitTable make_table(const std::string& model_id, int num_classes, const std::vector<std::string>& ids,
                      const std::vector<int>& labels, const std::vector<std::vector<double>>& logits) {
    if (ids.size() != labels.size() || ids.size() != logits.size())
        throw ValidationError("sample_ids, labels and logits must have the same length");
    std::vector<LogitRow> rows;
    rows.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) rows.push_back({ids[i], labels[i], logits[i]});
    return LogitTable(model_id, num_classes, std::move(rows));
}

std::vector<std::vector<double>> rows_of(const LogitTable& t) {
    std::vector<std::vector<double>> out;
    out.reserve(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out.emplace_back(t.logits(i).begin(), t.logits(i).end());
    return out;
}

py::dict summary_dict(const ExperimentReport& r) {
    py::dict out;
    auto ms = [](const MeanSe& m) { return py::dict(py::arg("mean") = m.mean, py::arg("se") = m.se, py::arg("n") = m.n); };
    for (const auto& row : r.summary)
        out[py::str(row.method)] = py::dict(py::arg("acc") = ms(row.acc), py::arg("macs") = ms(row.macs),
                                            py::arg("n_exp_frac") = ms(row.n_exp_frac));
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "cascadekit core bindings";
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    py::enum_<ScoreMethod>(m, "ScoreMethod")
        .value("max_prob", ScoreMethod::max_prob)
        .value("neg_entropy", ScoreMethod::neg_entropy);
    py::enum_<ThresholdPolicy>(m, "ThresholdPolicy")
        .value("max_accuracy", ThresholdPolicy::max_accuracy)
        .value("constrained_min_cost", ThresholdPolicy::constrained_min_cost);

    py::class_<LogitTable>(m, "LogitTable")
        .def(py::init(&make_table), py::arg("model_id"), py::arg("num_classes"), py::arg("sample_ids"),
             py::arg("labels"), py::arg("logits"))
        .def_property_readonly("model_id", &LogitTable::model_id)
        .def_property_readonly("num_classes", &LogitTable::num_classes)
        .def_property_readonly("labels", [](const LogitTable& t) { return t.labels(); })
        .def_property_readonly("sample_ids", [](const LogitTable& t) { return t.sample_ids(); })
        .def_property_readonly("logits", &rows_of)
        .def("__len__", &LogitTable::size);

    m.def("load_logit_table", [](const std::filesystem::path& p) { return load_logit_table(p); }, py::arg("path"));
    m.def("write_logit_table", [](const LogitTable& t, const std::filesystem::path& p) { write_logit_table(t, p); },
          py::arg("table"), py::arg("path"));

    m.def("softmax", [](const std::vector<double>& z) {
        const auto p = softmax(z);
        return std::vector<double>(p.values().begin(), p.values().end());
    }, py::arg("logits"));
    m.def("confidence", [](const std::vector<double>& z, ScoreMethod method, double t) { return confidence(z, method, t); },
          py::arg("logits"), py::arg("method") = ScoreMethod::max_prob, py::arg("temperature") = 1.0);
    m.def("confidences", &confidences, py::arg("table"), py::arg("method") = ScoreMethod::max_prob,
          py::arg("temperature") = 1.0);
    m.def("predictions", &predictions, py::arg("table"));
    m.def("mean_nll", &mean_nll, py::arg("table"), py::arg("temperature") = 1.0);
    m.def("fit_temperature", &fit_temperature, py::arg("val"));
    m.def("apply_temperature", &apply_temperature, py::arg("table"), py::arg("temperature"));
    m.def("ece", py::overload_cast<const LogitTable&, int>(&ece), py::arg("table"), py::arg("bins") = kDefaultEceBins);

    py::class_<StageCost>(m, "StageCost")
        .def(py::init([](double macs, bool cumulative) { return StageCost{macs, cumulative}; }), py::arg("macs"),
             py::arg("cumulative") = false)
        .def_readwrite("macs", &StageCost::macs)
        .def_readwrite("cumulative", &StageCost::cumulative);
    py::class_<StageOutputs>(m, "StageOutputs")
        .def(py::init([](std::vector<int> preds, std::vector<double> confs, StageCost cost) {
                 return StageOutputs{std::move(preds), std::move(confs), cost};
             }),
             py::arg("preds"), py::arg("confs"), py::arg("cost"))
        .def_readwrite("preds", &StageOutputs::preds)
        .def_readwrite("confs", &StageOutputs::confs)
        .def_readwrite("cost", &StageOutputs::cost);
    py::class_<SweepPoint>(m, "SweepPoint")
        .def_readonly("delta", &SweepPoint::delta)
        .def_readonly("acc_casc", &SweepPoint::acc_casc)
        .def_readonly("n_exp", &SweepPoint::n_exp)
        .def_readonly("macs_casc", &SweepPoint::macs_casc)
        .def("__repr__", [](const SweepPoint& p) {
            std::ostringstream s;
            s << "SweepPoint(delta=" << format_real(p.delta) << ", acc_casc=" << format_real(p.acc_casc)
              << ", n_exp=" << p.n_exp << ", macs_casc=" << format_real(p.macs_casc) << ")";
            return s.str();
        });

    m.def("n_expensive", [](const std::vector<double>& c, double d) { return n_expensive(c, d); }, py::arg("confs"),
          py::arg("delta"));
    m.def("cascade_accuracy",
          [](const std::vector<int>& y, const std::vector<int>& f, const std::vector<int>& e,
             const std::vector<double>& c, double d) { return cascade_accuracy(y, f, e, c, d); },
          py::arg("labels"), py::arg("fast_preds"), py::arg("exp_preds"), py::arg("confs"), py::arg("delta"));
    m.def("cascade_macs",
          [](StageCost fast, StageCost exp, std::size_t n_exp, std::size_t n) { return cascade_macs(fast, exp, n_exp, n); },
          py::arg("fast"), py::arg("expensive"), py::arg("n_exp"), py::arg("n"));
    m.def("sweep_thresholds",
          [](const std::vector<int>& y, const StageOutputs& f, const StageOutputs& e) { return sweep_thresholds(y, f, e); },
          py::arg("labels"), py::arg("fast"), py::arg("expensive"));
    m.def("select_threshold",
          [](const SweepCurve& c, ThresholdPolicy p, double eps, double acc_exp) {
              const auto r = select_threshold(c, p, eps, acc_exp);
              return py::dict(py::arg("delta") = r.delta, py::arg("index") = r.index, py::arg("infeasible") = r.infeasible);
          },
          py::arg("curve"), py::arg("policy") = ThresholdPolicy::max_accuracy, py::arg("epsilon") = 0.0,
          py::arg("acc_exp"));
    m.def("route_multistage",
          [](const std::vector<StageOutputs>& st, const std::vector<int>& y, const std::vector<double>& d) {
              const auto r = route_multistage(st, y, d);
              return py::dict(py::arg("exit_stage") = r.exit_stage, py::arg("exit_counts") = r.exit_counts,
                              py::arg("reached_counts") = r.reached_counts, py::arg("correct") = r.correct,
                              py::arg("acc_casc") = r.acc_casc, py::arg("macs_casc") = r.macs_casc);
          },
          py::arg("stages"), py::arg("labels"), py::arg("deltas"));
    m.def("search_multistage_thresholds",
          [](const std::vector<StageOutputs>& st, const std::vector<int>& y, ThresholdPolicy p, double eps) {
              const auto r = search_multistage_thresholds(st, y, p, eps);
              return py::dict(py::arg("deltas") = r.deltas, py::arg("acc_casc") = r.result.acc_casc,
                              py::arg("macs_casc") = r.result.macs_casc, py::arg("infeasible") = r.infeasible);
          },
          py::arg("stages"), py::arg("labels"), py::arg("policy") = ThresholdPolicy::max_accuracy,
          py::arg("epsilon") = 0.0);

    py::class_<CorrectnessPair>(m, "CorrectnessPair")
        .def(py::init([](bool f, bool e) { return CorrectnessPair{f, e}; }), py::arg("fast_correct"),
             py::arg("exp_correct"))
        .def_readwrite("fast_correct", &CorrectnessPair::fast_correct)
        .def_readwrite("exp_correct", &CorrectnessPair::exp_correct);
    m.def("ltc_loss_sample", &ltc_loss_sample, py::arg("conf"), py::arg("pair"), py::arg("C") = 0.5);
    m.def("ltc_grad_conf", &ltc_grad_conf, py::arg("pair"), py::arg("C") = 0.5);
    m.def("grad_wrt_logits",
          [](const std::vector<double>& z, CorrectnessPair p, double c) { return grad_wrt_logits(z, p, c); },
          py::arg("logits"), py::arg("pair"), py::arg("C") = 0.5);

    m.def("default_experiment_config", [] { return to_json(default_experiment_config()).dump(); },
          "Default benchmark configuration as a JSON string.");
    m.def("run_experiment",
          [](const std::string& config_json, std::size_t seeds) {
              ExperimentReport r;
              const auto cfg = experiment_config_from_json(nlohmann::json::parse(config_json));
              {
                  py::gil_scoped_release release;
                  r = run_experiment(cfg, seeds);
              }
              return summary_dict(r);
          },
          py::arg("config_json"), py::arg("seeds") = 1,
          "Runs an experiment from a JSON config and returns per-method mean/se of accuracy, MACs and routed fraction.");
}
