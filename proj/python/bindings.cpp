#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dualsr/gradcheck.hpp"
#include "dualsr/pipeline.hpp"
#include "dualsr/synthetic.hpp"

namespace py = pybind11;
using namespace dualsr;

namespace {

RunConfig to_config(const py::dict& values) {
  RunConfig cfg;
  for (const auto& [k, v] : values) {
    const std::string key = py::str(k);
    std::string text;
    if (py::isinstance<py::bool_>(v))
      text = v.cast<bool>() ? "true" : "false";
    else
      text = py::str(v);
    set_config_value(cfg, key, text);
  }
  cfg.validate();
  return cfg;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["hr_at_k"] = r.hr_at_k;
  d["ndcg_at_k"] = r.ndcg_at_k;
  d["mrr"] = r.mrr;
  d["k"] = r.k;
  d["num_cases"] = r.num_cases;
  d["ranks"] = r.ranks;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual dynamic representation sequential recommender";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("config_keys", &config_keys);
  m.def("variant_names", &variant_names);
  m.def("resolved_config", [](const py::dict& values) { return resolved_config(to_config(values)); });
  m.def("config_hash", [](const py::dict& values) { return config_hash(to_config(values)); });
  m.def("run_directory", [](const py::dict& values) { return run_directory(to_config(values)); });

  m.def(
      "generate",
      [](const std::string& kind, std::uint64_t seed, const std::string& path) {
        std::vector<RawInteraction> raw;
        if (kind == "planted" || kind == "planted_gaps") {
          PlantedOptions o;
          o.regular_gaps = kind == "planted_gaps";
          raw = generate_planted(o, seed);
        } else if (kind == "flip") {
          raw = generate_flip({}, seed);
        } else if (kind == "micro") {
          raw = micro_triplets();
        } else {
          throw ConfigError("unknown dataset kind '" + kind + "'");
        }
        write_triplets(path, raw);
        return raw.size();
      },
      py::arg("kind"), py::arg("seed"), py::arg("path"));

  m.def(
      "prepare",
      [](const py::dict& values) {
        const InteractionLog log = prepare_dataset(to_config(values));
        py::dict d;
        d["num_interactions"] = log.interactions.size();
        d["num_users"] = log.num_users;
        d["num_items"] = log.num_items;
        d["slice_count"] = log.slice_count;
        d["slice_length"] = log.slice_length;
        return d;
      },
      py::arg("config"));

  m.def(
      "train",
      [](const py::dict& values) {
        const RunConfig cfg = to_config(values);
        const InteractionLog log = load_dataset(cfg);
        TrainOutputs out;
        {
          py::gil_scoped_release release;
          out = run_training(cfg, log);
        }
        py::list epochs;
        for (const auto& e : out.result.epochs) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["train_loss"] = e.train_loss;
          d["train_bce"] = e.train_bce;
          d["train_tpp"] = e.train_tpp;
          d["val_ndcg10"] = e.val_ndcg10;
          epochs.append(d);
        }
        py::dict d;
        d["run_dir"] = out.run_dir;
        d["best_epoch"] = out.result.best_epoch;
        d["best_val_ndcg"] = out.result.best_val_ndcg;
        d["stopped_early"] = out.result.stopped_early;
        d["epochs"] = epochs;
        return d;
      },
      py::arg("config"));

  m.def(
      "evaluate",
      [](const py::dict& values, const std::string& split_name) {
        const RunConfig cfg = to_config(values);
        return report_dict(run_evaluation(cfg, load_dataset(cfg), split_name));
      },
      py::arg("config"), py::arg("split") = "test");

  m.def(
      "gradcheck",
      [](double beta, std::uint64_t seed) {
        const InteractionLog log = micro_log();
        RunConfig cfg;
        cfg.slices = 3;
        cfg.model.dim = 4;
        cfg.model.dropout = 0.0;
        cfg.train.seed = seed;
        Model model = build_model(cfg, log);
        GradcheckOptions opt;
        opt.beta = beta;
        opt.seed = seed;
        py::dict d;
        for (const auto& g : gradcheck(model, log, opt).groups) d[py::str(g.group)] = g.max_rel_error;
        return d;
      },
      py::arg("beta") = 0.01, py::arg("seed") = 0);

  m.def(
      "metrics", [](const std::vector<std::uint32_t>& ranks, std::size_t k) { return report_dict(metrics(ranks, k)); },
      py::arg("ranks"), py::arg("k") = 10);
  m.def(
      "rank_from_scores",
      [](double positive, const std::vector<double>& negatives) { return rank_from_scores(positive, negatives); },
      py::arg("positive"), py::arg("negatives"));

  m.def(
      "normalized_adjacency",
      [](const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs) {
        const SliceGraph g = build_graph(0, pairs);
        const Matrix d = g.norm_adjacency.to_dense();
        std::vector<std::vector<double>> rows(d.rows, std::vector<double>(d.cols));
        for (std::size_t r = 0; r < d.rows; ++r)
          for (std::size_t c = 0; c < d.cols; ++c) rows[r][c] = d(r, c);
        py::dict out;
        out["users"] = g.active_users;
        out["items"] = g.active_items;
        out["matrix"] = rows;
        return out;
      },
      py::arg("pairs"));

  m.def(
      "log_density",
      [](double activation, double omega, double gap) { return log_density_from_activation(activation, omega, gap); },
      py::arg("activation"), py::arg("omega"), py::arg("gap"));
}
