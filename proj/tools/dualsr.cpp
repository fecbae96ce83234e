// Command-line entry point: generate, prepare, train, evaluate, gradcheck, ablate.
// Exit codes: 0 success, 1 contract or configuration error, 2 numerical abort.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dualsr/config.hpp"
#include "dualsr/gradcheck.hpp"
#include "dualsr/pipeline.hpp"
#include "dualsr/synthetic.hpp"

namespace fs = std::filesystem;
using namespace dualsr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("-c,--config", c.config_path, "config file (key = value)");
  if (config_required) opt->required();
  cmd->add_option("--set", c.overrides, "override a config key: key=value (repeatable)");
}

// File values, then DUALSR_<KEY> environment overrides, then --set.
RunConfig resolve(const Common& c, RunConfig base = {}) {
  RunConfig cfg = c.config_path.empty() ? base : load_config(c.config_path, base);
  apply_env_overrides(cfg);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void print_report(const std::string& label, const EvalReport& r) {
  std::printf("%s: HR@%zu=%.4f NDCG@%zu=%.4f MRR=%.4f cases=%zu\n", label.c_str(), r.k, r.hr_at_k, r.k, r.ndcg_at_k,
              r.mrr, r.num_cases);
}

int cmd_generate(const std::string& kind, std::uint64_t seed, const std::string& out) {
  std::vector<RawInteraction> raw;
  if (kind == "planted") {
    raw = generate_planted({}, seed);
  } else if (kind == "planted_gaps") {
    PlantedOptions o;
    o.regular_gaps = true;
    raw = generate_planted(o, seed);
  } else if (kind == "flip") {
    raw = generate_flip({}, seed);
  } else if (kind == "micro") {
    raw = micro_triplets();
  } else {
    throw ConfigError("unknown dataset kind '" + kind + "' (expected planted, planted_gaps, flip, micro)");
  }
  write_triplets(out, raw);
  std::printf("wrote %zu interactions to %s\n", raw.size(), out.c_str());
  return kExitOk;
}

int cmd_prepare(const Common& c) {
  const RunConfig cfg = resolve(c);
  const InteractionLog log = prepare_dataset(cfg);
  std::printf("prepared %zu interactions, %u users, %u items, %u slices of length %lld in %s\n",
              log.interactions.size(), log.num_users, log.num_items, log.slice_count,
              static_cast<long long>(log.slice_length), cfg.data_dir.c_str());
  return kExitOk;
}

int cmd_train(const Common& c) {
  const RunConfig cfg = resolve(c);
  const InteractionLog log = load_dataset(cfg);
  try {
    const TrainOutputs out = run_training(cfg, log);
    std::printf("run dir: %s\nbest epoch %zu, val NDCG@%zu=%.4f%s\n", out.run_dir.c_str(), out.result.best_epoch,
                cfg.train.eval_k, out.result.best_val_ndcg, out.result.stopped_early ? " (early stop)" : "");
  } catch (const NumericalError& e) {
    const fs::path dir(run_directory(cfg));
    fs::create_directories(dir);
    std::ofstream(dir / "numerical_abort.txt") << e.what();
    throw;
  }
  return kExitOk;
}

int cmd_evaluate(const Common& c, const std::string& which) {
  const RunConfig cfg = resolve(c);
  const InteractionLog log = load_dataset(cfg);
  const EvalReport r = run_evaluation(cfg, log, which);
  print_report(which, r);
  std::printf("wrote %s/eval.json\n", run_directory(cfg).c_str());
  return kExitOk;
}

int cmd_gradcheck(const Common& c, const std::string& corrupt) {
  RunConfig base;
  base.model.dim = 4;
  base.model.layers = 2;
  base.model.dropout = 0.0;
  base.train.beta = 0.01;
  const RunConfig resolved = resolve(c, base);
  const InteractionLog log = micro_log();
  Model model = build_model(resolved, log);
  GradcheckOptions opt;
  opt.beta = resolved.train.beta;
  opt.seed = resolved.train.seed;
  if (!corrupt.empty()) opt.corrupt_group = corrupt;
  const GradcheckReport report = gradcheck(model, log, opt);
  for (const auto& g : report.groups) {
    if (g.zero_gradient)
      std::printf("%-6s entries=%-4zu zero-gradient, skipped\n", g.group.c_str(), g.entries);
    else
      std::printf("%-6s entries=%-4zu max_rel_err=%.3e %s\n", g.group.c_str(), g.entries, g.max_rel_error,
                  g.passed ? "PASS" : "FAIL");
  }
  std::printf("gradcheck %s\n", report.passed ? "PASS" : "FAIL");
  return report.passed ? kExitOk : kExitNumerical;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int cmd_ablate(const Common& c, const std::string& variants, const std::string& grid) {
  const RunConfig cfg = resolve(c);
  if (variants.empty() == grid.empty()) throw ConfigError("ablate needs exactly one of --variants or --grid");
  auto runs = grid.empty() ? variant_runs(cfg, split_list(variants)) : grid_runs(cfg, grid);
  const InteractionLog log = load_dataset(cfg);
  const auto rows = run_ablation(runs, log);
  const std::string dir = cfg.output_dir + "/ablate-" + config_hash(cfg) + "-s" + std::to_string(cfg.train.seed);
  write_ablation_table(dir, rows);
  for (const auto& r : rows) print_report(r.name, r.test);
  std::printf("wrote %s/ablation.csv and ablation.json\n", dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual dynamic representation sequential recommender"};
  app.require_subcommand(1);

  std::string kind = "planted", out;
  std::uint64_t seed = 0;
  auto* gen = app.add_subcommand("generate", "write a synthetic triplet file");
  gen->add_option("--kind", kind, "planted, planted_gaps, flip or micro");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("-o,--out", out, "output path")->required();

  Common prep_c, train_c, eval_c, grad_c, abl_c;
  auto* prep = app.add_subcommand("prepare", "filter, index and slice a triplet file");
  add_common(prep, prep_c, false);
  std::string input, data_dir;
  std::uint32_t slices = 0, min_interactions = 0;
  prep->add_option("--input", input, "raw user<TAB>item<TAB>timestamp file");
  prep->add_option("--slices", slices, "number of time slices T");
  prep->add_option("--min-interactions", min_interactions, "frequency filter threshold");
  prep->add_option("--out", data_dir, "prepared dataset directory");

  auto* tr = app.add_subcommand("train", "train a model");
  add_common(tr, train_c, true);

  auto* ev = app.add_subcommand("evaluate", "evaluate a trained checkpoint");
  add_common(ev, eval_c, true);
  std::string which = "test";
  ev->add_option("--split", which, "valid or test");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check on the micro-instance");
  add_common(gc, grad_c, false);
  std::string corrupt;
  gc->add_option("--corrupt", corrupt, "perturb the analytic gradient of a group (negative control)");

  auto* ab = app.add_subcommand("ablate", "train and test a list of variants or a parameter grid");
  add_common(ab, abl_c, true);
  std::string variants, grid;
  ab->add_option("--variants", variants, "comma-separated variant names");
  ab->add_option("--grid", grid, "beta or layers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_generate(kind, seed, out);
    if (*prep) {
      if (!input.empty()) prep_c.overrides.push_back("input=" + input);
      if (slices) prep_c.overrides.push_back("slices=" + std::to_string(slices));
      if (min_interactions) prep_c.overrides.push_back("min_interactions=" + std::to_string(min_interactions));
      if (!data_dir.empty()) prep_c.overrides.push_back("data_dir=" + data_dir);
      return cmd_prepare(prep_c);
    }
    if (*tr) return cmd_train(train_c);
    if (*ev) return cmd_evaluate(eval_c, which);
    if (*gc) return cmd_gradcheck(grad_c, corrupt);
    if (*ab) return cmd_ablate(abl_c, variants, grid);
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}
