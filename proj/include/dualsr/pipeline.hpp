#pragma once

// End-to-end operations behind the command-line tool and the Python module.

#include <string>
#include <vector>

#include "dualsr/config.hpp"
#include "dualsr/eval.hpp"
#include "dualsr/training.hpp"

namespace dualsr {

// Reads cfg.input, filters, slices into cfg.slices and writes cfg.data_dir.
InteractionLog prepare_dataset(const RunConfig& cfg);

// Prepared dataset of cfg.data_dir; ConfigError when its slice count differs
// from cfg.slices.
InteractionLog load_dataset(const RunConfig& cfg);

Model build_model(const RunConfig& cfg, const InteractionLog& log);

struct TrainOutputs {
  std::string run_dir;
  TrainResult result;
};

// Trains into run_directory(cfg): config.resolved, train_log.jsonl,
// params.bin, optimizer.bin.
TrainOutputs run_training(const RunConfig& cfg, const InteractionLog& log);

// Evaluates the checkpoint in run_directory(cfg) on the valid or test slice
// and writes eval.json there.
EvalReport run_evaluation(const RunConfig& cfg, const InteractionLog& log, const std::string& which);

// FNV-1a of the file bytes, 16 hex digits.
std::string file_digest(const std::string& path);

struct AblationRow {
  std::string name;
  std::string config_hash;
  std::size_t best_epoch = 0;
  double val_ndcg10 = 0.0;
  EvalReport test;
};

// Trains and tests each configuration on the same data and seed.
std::vector<AblationRow> run_ablation(const std::vector<std::pair<std::string, RunConfig>>& runs,
                                      const InteractionLog& log);

std::vector<std::pair<std::string, RunConfig>> variant_runs(const RunConfig& base,
                                                            const std::vector<std::string>& variants);
// grid is "beta" (0, 1e-5, ..., 1) or "layers" (1..5).
std::vector<std::pair<std::string, RunConfig>> grid_runs(const RunConfig& base, const std::string& grid);

// Writes ablation.csv and ablation.json into dir.
void write_ablation_table(const std::string& dir, const std::vector<AblationRow>& rows);

}  // namespace dualsr
