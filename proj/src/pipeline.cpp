#include "dualsr/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace dualsr {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

InteractionLog prepare_dataset(const RunConfig& cfg) {
  if (cfg.input.empty()) throw ConfigError("prepare needs 'input'");
  if (cfg.data_dir.empty()) throw ConfigError("prepare needs 'data_dir'");
  InteractionLog log = assign_slices(ingest(cfg.input, cfg.min_interactions), cfg.slices);
  write_prepared(log, cfg.data_dir);
  return log;
}

InteractionLog load_dataset(const RunConfig& cfg) {
  if (cfg.data_dir.empty()) throw ConfigError("config needs 'data_dir'");
  InteractionLog log = read_prepared(cfg.data_dir);
  if (log.slice_count != cfg.slices)
    throw ConfigError("prepared data has " + std::to_string(log.slice_count) + " slices but config says " +
                      std::to_string(cfg.slices));
  return log;
}

Model build_model(const RunConfig& cfg, const InteractionLog& log) {
  return Model(cfg.model, log.num_users, log.num_items, Rng(cfg.train.seed).split("init"));
}

TrainOutputs run_training(const RunConfig& cfg, const InteractionLog& log) {
  cfg.validate();
  TrainOutputs out;
  out.run_dir = run_directory(cfg);
  const fs::path dir(out.run_dir);
  fs::create_directories(dir);
  write_text(dir / "config.resolved", resolved_config(cfg));

  Model model = build_model(cfg, log);
  const GraphInputs graphs = prepare_graph_inputs(log, cfg.model);
  AdamState optimizer;
  std::ofstream train_log(dir / "train_log.jsonl", std::ios::binary);
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) { train_log << epoch_to_json(r) << '\n' << std::flush; };
  out.result = train(model, log, graphs, cfg.train, optimizer, hooks);
  save_parameters((dir / "params.bin").string(), model.params());
  save_optimizer((dir / "optimizer.bin").string(), model.params(), optimizer);
  return out;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot read '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EvalReport run_evaluation(const RunConfig& cfg, const InteractionLog& log, const std::string& which) {
  cfg.validate();
  const fs::path dir(run_directory(cfg));
  const std::string params_path = (dir / "params.bin").string();
  if (!fs::exists(params_path)) throw ConfigError("no checkpoint at '" + params_path + "'; run train first");
  Model model = build_model(cfg, log);
  load_parameters(params_path, model.params());
  const SliceSplit sp = split(log);
  std::uint32_t target;
  if (which == "test")
    target = sp.test_slice;
  else if (which == "valid")
    target = sp.valid_slice;
  else
    throw ConfigError("unknown split '" + which + "' (expected valid or test)");
  const GraphInputs graphs = prepare_graph_inputs(log, cfg.model);
  const EvalReport report =
      evaluate(model, graphs, log, target, EvalOptions{cfg.train.eval_k, cfg.train.eval_negatives, cfg.train.seed});
  write_text(dir / "eval.json", report_to_json(report, config_hash(cfg), file_digest(params_path)));
  return report;
}

std::vector<AblationRow> run_ablation(const std::vector<std::pair<std::string, RunConfig>>& runs,
                                      const InteractionLog& log) {
  std::vector<AblationRow> rows;
  for (const auto& [name, cfg] : runs) {
    const TrainOutputs t = run_training(cfg, log);
    AblationRow row;
    row.name = name;
    row.config_hash = config_hash(cfg);
    row.best_epoch = t.result.best_epoch;
    row.val_ndcg10 = t.result.best_val_ndcg;
    row.test = run_evaluation(cfg, log, "test");
    rows.push_back(row);
  }
  return rows;
}

std::vector<std::pair<std::string, RunConfig>> variant_runs(const RunConfig& base,
                                                            const std::vector<std::string>& variants) {
  std::vector<std::pair<std::string, RunConfig>> runs;
  for (const auto& v : variants) runs.emplace_back(v, apply_variant(base, v));
  return runs;
}

std::vector<std::pair<std::string, RunConfig>> grid_runs(const RunConfig& base, const std::string& grid) {
  std::vector<std::pair<std::string, RunConfig>> runs;
  if (grid == "beta") {
    for (const char* b : {"0", "1e-5", "1e-4", "1e-3", "1e-2", "1e-1", "1"}) {
      RunConfig c = base;
      set_config_value(c, "beta", b);
      runs.emplace_back(std::string("beta=") + b, c);
    }
  } else if (grid == "layers") {
    for (int l = 1; l <= 5; ++l) {
      RunConfig c = base;
      c.model.layers = static_cast<std::size_t>(l);
      runs.emplace_back("layers=" + std::to_string(l), c);
    }
  } else {
    throw ConfigError("unknown grid '" + grid + "' (expected beta or layers)");
  }
  return runs;
}

void write_ablation_table(const std::string& dir, const std::vector<AblationRow>& rows) {
  fs::create_directories(dir);
  std::ostringstream csv;
  csv.precision(17);
  csv << "name,config_hash,best_epoch,val_ndcg10,test_hr10,test_ndcg10,test_mrr,cases\n";
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    csv << r.name << ',' << r.config_hash << ',' << r.best_epoch << ',' << r.val_ndcg10 << ',' << r.test.hr_at_k
        << ',' << r.test.ndcg_at_k << ',' << r.test.mrr << ',' << r.test.num_cases << '\n';
    nlohmann::ordered_json j;
    j["name"] = r.name;
    j["config_hash"] = r.config_hash;
    j["best_epoch"] = r.best_epoch;
    j["val_ndcg10"] = r.val_ndcg10;
    j["test_hr10"] = r.test.hr_at_k;
    j["test_ndcg10"] = r.test.ndcg_at_k;
    j["test_mrr"] = r.test.mrr;
    j["cases"] = r.test.num_cases;
    arr.push_back(j);
  }
  write_text(fs::path(dir) / "ablation.csv", csv.str());
  write_text(fs::path(dir) / "ablation.json", arr.dump(2) + "\n");
}

}  // namespace dualsr
