#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "banditmatch/config.hpp"
#include "banditmatch/datasets.hpp"
#include "banditmatch/fet.hpp"
#include "banditmatch/trainer.hpp"

namespace py = pybind11;
using namespace bmatch;

namespace {

nn::Tensor to_tensor(const std::vector<std::vector<double>>& rows) { return nn::Tensor::from_rows(rows); }

std::vector<std::vector<double>> to_rows(const nn::Tensor& t) {
  std::vector<std::vector<double>> out(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) out[i].assign(t.row(i).begin(), t.row(i).end());
  return out;
}

py::dict summary_dict(const MetricSummary& s) {
  py::dict d;
  auto put = [&](const char* name, const world::MeanStd& v) { d[name] = py::make_tuple(v.mean, v.std); };
  put("turns", s.turns);
  put("match", s.match);
  put("inform_recall", s.inform_recall);
  put("inform_f1", s.inform_f1);
  put("success", s.success_pct);
  return d;
}

py::dict fet_thresholds(const std::vector<std::vector<double>>& probs, const std::vector<ActionSet>& logged,
                        const std::vector<std::vector<double>>& rho, const std::vector<int>& delta) {
  const nn::Tensor p = to_tensor(probs), r = to_tensor(rho);
  if (logged.size() != p.rows() || delta.size() != p.rows() || r.rows() != p.rows()) {
    throw UsageError("probs, logged, rho and delta need one entry per row");
  }
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (delta[i] == 0) negatives.push_back(i);
  }
  const auto rows = fet::correct_positive_set(p, logged, delta);
  const auto base = fet::positive_thresholds(p, logged, rows);
  const auto stats = fet::model_correctness(p, logged, r, rows, negatives);
  const auto t = fet::negative_thresholds(base, stats, {});
  py::dict d;
  d["correct_rows"] = rows;
  d["mc_pos"] = stats.mc_pos;
  d["mc_neg"] = stats.mc_neg;
  d["scale"] = t.scale;
  d["pos_yes"] = t.pos_yes;
  d["pos_no"] = t.pos_no;
  d["neg_yes"] = t.neg_yes;
  d["neg_no"] = t.neg_no;
  d["confidence"] = to_rows(fet::confidence_mask(p, delta, t.neg_yes, t.neg_no));
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "BanditMatch core: dialog world, datasets, thresholding and training pipeline";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<VersionError>(m, "VersionError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  py::class_<world::WorldSchema>(m, "World")
      .def_static("default", &world::WorldSchema::default_world)
      .def_static("generate",
                  [](int domains, int informable, int requestable, int values, int entities, std::uint64_t seed) {
                    return world::WorldSchema::generate({domains, informable, requestable, values, entities}, seed);
                  },
                  py::arg("domains") = 3, py::arg("informable") = 3, py::arg("requestable") = 3,
                  py::arg("values") = 3, py::arg("entities") = 8, py::arg("seed") = 0)
      .def_static("parse", [](const std::string& text) { return world::parse_world(text); })
      .def_static("load", &world::load_world)
      .def("save", [](const world::WorldSchema& w, const std::string& path) { world::save_world(path, w); })
      .def("to_text", [](const world::WorldSchema& w) { return world::world_to_text(w); })
      .def_property_readonly("num_domains", &world::WorldSchema::num_domains)
      .def_property_readonly("num_actions", &world::WorldSchema::num_actions)
      .def_property_readonly("state_dim", &world::WorldSchema::state_dim)
      .def("action_name", &world::WorldSchema::action_name)
      .def("num_goals", [](const world::WorldSchema& w, int domain) { return world::enumerate_goals(w, domain).size(); },
           py::arg("domain") = 0)
      .def(py::self == py::self);

  m.def(
      "expert_report",
      [](const world::WorldSchema& w, int n_dialogs, std::uint64_t seed) {
        EvalConfig cfg;
        cfg.n_dialogs = n_dialogs;
        cfg.n_runs = 1;
        return summary_dict(evaluate(world::expert_agent(w), w, cfg, seed, "expert").summary);
      },
      py::arg("world"), py::arg("n_dialogs") = 100, py::arg("seed") = 0);

  m.def(
      "generate_corpus",
      [](const world::WorldSchema& w, int n_dialogs, std::uint64_t seed) {
        py::list out;
        for (const auto& ex : generate_corpus(w, n_dialogs, seed)) out.append(py::make_tuple(ex.state, ex.actions));
        return out;
      },
      py::arg("world"), py::arg("n_dialogs"), py::arg("seed") = 0);

  m.def("simulate_feedback", &simulate_feedback, py::arg("predicted"), py::arg("truth"));
  m.def("threshold_set", [](const std::vector<double>& p) { return threshold_set(p); });
  m.def("fet_thresholds", &fet_thresholds, py::arg("probs"), py::arg("logged"), py::arg("rho"), py::arg("delta"));
  m.def("derive_seed", &derive_seed, py::arg("master"), py::arg("stream"));

  py::class_<PolicyNet>(m, "Policy")
      .def_static("load", &PolicyNet::load)
      .def("save", &PolicyNet::save)
      .def_property_readonly("num_actions", &PolicyNet::num_actions)
      .def_property_readonly("state_dim", &PolicyNet::state_dim)
      .def_property_readonly("role", [](const PolicyNet& p) { return to_string(p.role()); })
      .def("probs", [](const PolicyNet& p, const std::vector<double>& s) { return p.probs(s); })
      .def("predict", [](const PolicyNet& p, const std::vector<double>& s) { return predict_set(p, s).actions; });

  m.def(
      "parse_config",
      [](const std::string& text) {
        const ExperimentConfig c = parse_config(text);
        validate(c);
        return config_to_text(c);
      },
      py::arg("text"), "Validates a config and returns its full snapshot text.");

  m.def(
      "run_experiment",
      [](const world::WorldSchema& w, const std::string& config_text, const std::vector<std::string>& methods) {
        const ExperimentConfig c = parse_config(config_text);
        validate(c);
        std::vector<MethodSpec> specs;
        for (const auto& name : methods) {
          bool matched = false;
          for (const auto& list : {table_methods(), ablation_methods()}) {
            for (const auto& s : list) {
              if (!matched && s.name() == name) {
                specs.push_back(s);
                matched = true;
              }
            }
          }
          if (!matched) throw ConfigError("unknown method '" + name + "'");
        }
        std::vector<ExperimentReport> reports;
        {
          py::gil_scoped_release release;
          reports = run_experiment(w, c.pipeline, specs, c.seeds);
        }
        py::dict out;
        for (const auto& r : reports) out[py::str(r.method)] = summary_dict(r.summary);
        out["csv"] = reports_to_csv(reports);
        return out;
      },
      py::arg("world"), py::arg("config") = "", py::arg("methods") = std::vector<std::string>{"logging", "banditmatch"},
      "Trains and evaluates each method once per seed; returns per-method (mean, std) metrics and the report CSV.");
}
