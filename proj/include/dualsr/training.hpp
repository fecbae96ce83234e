#pragma once

// Joint training of the next-slice classifier and the auxiliary event-time
// objective with Adam, mini-batches, per-epoch validation and early stopping.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dualsr/eval.hpp"
#include "dualsr/model.hpp"
#include "dualsr/tpp.hpp"

namespace dualsr {

enum class Window { sliding, fixed };

std::string to_string(Window w);
Window parse_window(const std::string& s);

struct TrainConfig {
  std::size_t batch_size = 100;
  double learning_rate = 5e-4;
  double l2 = 1e-4;
  double beta = 1e-3;
  std::size_t neg_per_pos = 1;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  Window window = Window::sliding;
  std::uint32_t s_min = 0;
  double clip_norm = 5.0;
  std::size_t eval_k = 10;
  std::size_t eval_negatives = kEvalNegatives;

  void validate() const;
};

struct TrainExample {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double label = 0.0;
  std::uint32_t history_end = 0;  // graphs 0..history_end visible; target in history_end + 1

  bool operator==(const TrainExample&) const = default;
};

// History windows used for training: [s_min, T-4] for sliding, {T-4} for fixed.
std::vector<std::uint32_t> training_history_slices(const SliceSplit& split, const TrainConfig& cfg);

// One epoch of examples: every distinct (u, i) of slice s+1 as a positive plus
// neg_per_pos negatives drawn uniformly from items u did not touch in s+1,
// shuffled and cut into batches. ConfigError when there are no positives.
std::vector<std::vector<TrainExample>> make_training_batches(const InteractionLog& log, const SliceSplit& split,
                                                             const TrainConfig& cfg, Rng& rng);

// Mean binary cross-entropy with predictions clamped to [1e-12, 1 - 1e-12].
double bce_loss(std::span<const double> predicted, std::span<const double> labels);
Var bce_loss(Var predicted, const Matrix& labels);

struct BatchLoss {
  Var total;  // bce + beta * tpp
  double bce = 0.0;
  double tpp = 0.0;
  std::size_t tpp_terms = 0;
  std::size_t tpp_clamped = 0;
};

// Forward pass for one batch on an existing tape.
BatchLoss batch_loss(BoundParams& bound, Model& model, const GraphInputs& graphs, const EventTimes& events,
                     std::span<const TrainExample> batch, double beta, const ForwardOptions& options);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_bce = 0.0;
  double train_tpp = 0.0;
  double val_hr10 = 0.0;
  double val_ndcg10 = 0.0;
  double val_mrr = 0.0;
  double seconds = 0.0;
};

std::string epoch_to_json(const EpochRecord& r, bool include_timing = true);

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_ndcg = -1.0;
  bool stopped_early = false;
};

struct TrainHooks {
  // Called after every epoch with its record.
  std::function<void(const EpochRecord&)> on_epoch;
};

// Trains in place. The model ends holding the best-validation parameters and
// `optimizer` the matching Adam state. Throws NumericalError on a non-finite
// loss or gradient, with the batch and parameter norms in the message.
TrainResult train(Model& model, const InteractionLog& log, const GraphInputs& graphs, const TrainConfig& cfg,
                  AdamState& optimizer, const TrainHooks& hooks = {});

}  // namespace dualsr
