#include "dualsr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

namespace dualsr {

namespace {

constexpr double kProbFloor = 1e-12;

bool all_finite(const ParameterSet& params) {
  for (const auto& p : params)
    for (double g : p.grad.data)
      if (!std::isfinite(g)) return false;
  return true;
}

std::string diagnostic(const char* what, std::size_t epoch, std::size_t batch_index,
                       std::span<const TrainExample> batch, const ParameterSet& params) {
  std::ostringstream os;
  os << what << " at epoch " << epoch << ", batch " << batch_index << " (" << batch.size() << " examples)\n";
  os << "batch (user item label history_end):\n";
  for (const auto& e : batch) os << "  " << e.user << ' ' << e.item << ' ' << e.label << ' ' << e.history_end << '\n';
  os << "parameter norms (value, grad):\n";
  for (const auto& p : params) {
    double v = 0.0, g = 0.0;
    for (double x : p.value.data) v += x * x;
    for (double x : p.grad.data) g += x * x;
    os << "  " << p.name << ' ' << std::sqrt(v) << ' ' << std::sqrt(g) << '\n';
  }
  return os.str();
}

}  // namespace

std::string to_string(Window w) { return w == Window::sliding ? "sliding" : "fixed"; }

Window parse_window(const std::string& s) {
  if (s == "sliding") return Window::sliding;
  if (s == "fixed") return Window::fixed;
  throw ConfigError("unknown window '" + s + "' (expected one of: sliding, fixed)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (neg_per_pos < 1) throw ConfigError("neg_per_pos must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  if (eval_k < 1) throw ConfigError("eval_k must be >= 1");
  if (eval_negatives < 1) throw ConfigError("eval_negatives must be >= 1");
}

std::vector<std::uint32_t> training_history_slices(const SliceSplit& split, const TrainConfig& cfg) {
  if (split.train_last < 1) throw ConfigError("no training windows: need at least 4 slices");
  const std::uint32_t last = split.train_last - 1;
  if (cfg.window == Window::fixed) return {last};
  if (cfg.s_min > last) throw ConfigError("s_min beyond the last training window");
  std::vector<std::uint32_t> out;
  for (std::uint32_t s = cfg.s_min; s <= last; ++s) out.push_back(s);
  return out;
}

std::vector<std::vector<TrainExample>> make_training_batches(const InteractionLog& log, const SliceSplit& split,
                                                             const TrainConfig& cfg, Rng& rng) {
  const auto windows = training_history_slices(split, cfg);
  std::vector<std::map<std::uint32_t, std::vector<std::uint32_t>>> targets(log.slice_count);
  for (const auto& it : log.interactions) targets[it.slice][it.user].push_back(it.item);

  std::vector<TrainExample> examples;
  for (std::uint32_t s : windows) {
    for (auto& [u, items] : targets[s + 1]) {
      std::sort(items.begin(), items.end());
      items.erase(std::unique(items.begin(), items.end()), items.end());
      const bool can_sample = items.size() < log.num_items;
      for (std::uint32_t i : items) {
        examples.push_back(TrainExample{u, i, 1.0, s});
        if (!can_sample) continue;
        for (std::size_t k = 0; k < cfg.neg_per_pos; ++k) {
          std::uint32_t j;
          do {
            j = static_cast<std::uint32_t>(rng.below(log.num_items));
          } while (std::binary_search(items.begin(), items.end(), j));
          examples.push_back(TrainExample{u, j, 0.0, s});
        }
      }
    }
  }
  if (examples.empty()) throw ConfigError("no positive training examples in the training windows");
  rng.shuffle(std::span<TrainExample>(examples));
  std::vector<std::vector<TrainExample>> batches;
  for (std::size_t b = 0; b < examples.size(); b += cfg.batch_size) {
    const std::size_t e = std::min(examples.size(), b + cfg.batch_size);
    batches.emplace_back(examples.begin() + static_cast<std::ptrdiff_t>(b),
                         examples.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return batches;
}

double bce_loss(std::span<const double> predicted, std::span<const double> labels) {
  if (predicted.size() != labels.size()) throw DimensionError("bce_loss: length mismatch");
  if (predicted.empty()) throw ContractError("bce_loss: empty batch");
  double total = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const double p = std::clamp(predicted[k], kProbFloor, 1.0 - kProbFloor);
    total -= labels[k] * std::log(p) + (1.0 - labels[k]) * std::log(1.0 - p);
  }
  return total / static_cast<double>(predicted.size());
}

Var bce_loss(Var predicted, const Matrix& labels) {
  if (!predicted.value().same_shape(labels)) throw DimensionError("bce_loss: shape mismatch");
  Tape& tape = *predicted.tape();
  Var p = ad::clamp(predicted, kProbFloor, 1.0 - kProbFloor);
  Var y = tape.constant(labels);
  Var pos = ad::mul(y, ad::log(p));
  Var neg = ad::mul(ad::affine(y, -1.0, 1.0), ad::log(ad::affine(p, -1.0, 1.0)));
  return ad::scale(ad::mean(ad::add(pos, neg)), -1.0);
}

BatchLoss batch_loss(BoundParams& bound, Model& model, const GraphInputs& graphs, const EventTimes& events,
                     std::span<const TrainExample> batch, double beta, const ForwardOptions& options) {
  if (batch.empty()) throw ContractError("batch_loss: empty batch");
  Tape& tape = bound.tape();
  std::uint32_t last = 0;
  std::vector<std::uint32_t> users, items, slices;
  Matrix labels(batch.size(), 1);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    users.push_back(batch[k].user);
    items.push_back(batch[k].item);
    slices.push_back(batch[k].history_end);
    labels.data[k] = batch[k].label;
    last = std::max(last, batch[k].history_end);
  }
  const SliceStates st = forward_all(bound, model, graphs, last, options);
  Var prob = predict(bound, model, st, users, items, slices, options);
  BatchLoss out;
  Var bce = bce_loss(prob, labels);
  out.bce = bce.scalar();
  out.total = bce;
  if (beta > 0.0) {
    std::vector<std::uint32_t> bu = users, bi = items;
    for (auto* v : {&bu, &bi}) {
      std::sort(v->begin(), v->end());
      v->erase(std::unique(v->begin(), v->end()), v->end());
    }
    const auto terms = collect_aux_terms(events, bu, bi, last);
    if (!terms.empty()) {
      AuxLoss aux = aux_loss(tape, ad::vstack(st.user), ad::vstack(st.item), model.num_users(), model.num_items(),
                             terms, model.params(), model.tpp());
      out.tpp = aux.value.scalar();
      out.tpp_terms = aux.terms;
      out.tpp_clamped = aux.clamped;
      out.total = ad::add(bce, ad::scale(aux.value, beta));
    }
  }
  return out;
}

std::string epoch_to_json(const EpochRecord& r, bool include_timing) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["train_bce"] = r.train_bce;
  j["train_tpp"] = r.train_tpp;
  j["val_hr10"] = r.val_hr10;
  j["val_ndcg10"] = r.val_ndcg10;
  j["val_mrr"] = r.val_mrr;
  if (include_timing) j["seconds"] = r.seconds;
  return j.dump();
}

TrainResult train(Model& model, const InteractionLog& log, const GraphInputs& graphs, const TrainConfig& cfg,
                  AdamState& optimizer, const TrainHooks& hooks) {
  cfg.validate();
  const SliceSplit sp = split(log);
  const EventTimes events = extract_event_times(log);
  ParameterSet& params = model.params();
  optimizer.learning_rate = cfg.learning_rate;
  if (optimizer.first_moment.size() != params.size()) optimizer.reset(params);
  const Rng root(cfg.seed);

  TrainResult result;
  std::vector<Matrix> best_values;
  AdamState best_optimizer = optimizer;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng sampling = root.split("sampling").split(std::uint64_t{epoch});
    Rng dropout = root.split("dropout").split(std::uint64_t{epoch});
    const auto batches = make_training_batches(log, sp, cfg, sampling);

    double sum_loss = 0.0, sum_bce = 0.0, sum_tpp = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      params.clear_grad();
      Tape tape;
      BoundParams bound(tape, params);
      ForwardOptions opt{true, &dropout};
      BatchLoss loss = batch_loss(bound, model, graphs, events, batches[b], cfg.beta, opt);
      const double reg = 0.5 * cfg.l2 * params.squared_norm();
      const double total = loss.total.scalar() + reg;
      if (!std::isfinite(total)) throw NumericalError(diagnostic("non-finite loss", epoch, b, batches[b], params));
      tape.backward(loss.total);
      if (!all_finite(params)) throw NumericalError(diagnostic("non-finite gradient", epoch, b, batches[b], params));
      clip_grad_norm(params, cfg.clip_norm);
      adam_step(params, optimizer, cfg.l2);
      sum_loss += total;
      sum_bce += loss.bce;
      sum_tpp += loss.tpp;
    }
    const auto nb = static_cast<double>(batches.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = sum_loss / nb;
    rec.train_bce = sum_bce / nb;
    rec.train_tpp = sum_tpp / nb;
    const EvalReport val =
        evaluate(model, graphs, log, sp.valid_slice, EvalOptions{cfg.eval_k, cfg.eval_negatives, cfg.seed});
    rec.val_hr10 = val.hr_at_k;
    rec.val_ndcg10 = val.ndcg_at_k;
    rec.val_mrr = val.mrr;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (rec.val_ndcg10 > result.best_val_ndcg) {
      result.best_val_ndcg = rec.val_ndcg10;
      result.best_epoch = epoch;
      best_values.clear();
      for (const auto& p : params) best_values.push_back(p.value);
      best_optimizer = optimizer;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (!best_values.empty()) {
    std::size_t k = 0;
    for (auto& p : params) p.value = best_values[k++];
    optimizer = best_optimizer;
  }
  params.clear_grad();
  return result;
}

}  // namespace dualsr
