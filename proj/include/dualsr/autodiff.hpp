#pragma once

// Define-by-run reverse-mode differentiation over dense double matrices.
//
// A Tape records every operation executed on its Vars. Parameters live outside
// the tape in a ParameterSet; Tape::param() registers a leaf that, after
// backward(), adds its gradient into Parameter::grad. A tape is single-threaded
// and discarded after one step.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dualsr/matrix.hpp"
#include "dualsr/rng.hpp"

namespace dualsr {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Ordered, named collection of trainable matrices. Iteration order is the
// insertion order, which fixes checkpoint layout and optimizer state order.
class ParameterSet {
 public:
  using Id = std::size_t;

  Id add(std::string name, Matrix init);
  Parameter& operator[](Id id) { return params_[id]; }
  const Parameter& operator[](Id id) const { return params_[id]; }
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  // Drops all gradient buffers; backward() re-creates them for reached parameters.
  void clear_grad();
  double squared_norm() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, Id> index_;
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  double scalar() const;
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the node's output gradient and value and routes gradient to its
  // inputs through Tape::grad_buffer.
  using BackwardFn = std::function<void(const Matrix& out_grad, const Matrix& out_value, Tape& tape)>;

  // With grad disabled nothing is retained for backward (evaluation mode).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Parameter& p);

  // Seeds d loss / d loss = 1 and runs every recorded backward in reverse
  // recording order; parameter leaves then accumulate into Parameter::grad.
  void backward(Var loss);

  // Gradient of a recorded node after backward(); zero matrix if untouched.
  Matrix grad(Var v) const;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // Op construction interface.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn fn);
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of node id, allocated as zeros on first use.
  Matrix& grad_buffer(std::size_t id);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

namespace ad {

// Elementwise binary ops broadcast a 1x1, 1xC or Rx1 operand.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var matmul(Var a, Var b);
// x * W + b with b a 1 x out row.
Var linear(Var x, Var w, Var b);

Var scale(Var a, double c);
// alpha * a + beta
Var affine(Var a, double alpha, double beta);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
// Values outside [lo, hi] are clamped and pass zero gradient.
Var clamp(Var a, double lo, double hi);

Var sum(Var a);
Var mean(Var a);
Var sum_squares(Var a);
// Elementwise mean of equally shaped operands.
Var mean_of(std::span<const Var> parts);

Var concat_cols(std::span<const Var> parts);
Var vstack(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const std::uint32_t> rows);
// Copy of base with rows[k] replaced by values row k. rows must be distinct.
Var scatter_rows(Var base, std::span<const std::uint32_t> rows, Var values);
// Row r taken from a when take_a[r] != 0, else from b.
Var select_rows(Var a, Var b, std::span<const std::uint8_t> take_a);
// Row r multiplied by the constant factors[r].
Var scale_rows(Var a, std::span<const double> factors);

// Sparse-dense product; gradient is S^T * out_grad.
Var spmm(const CsrMatrix& s, Var x);

// Inverted dropout: in training mode kept entries are scaled by 1/(1-rate).
Var dropout(Var a, double rate, bool training, Rng& rng);

}  // namespace ad

struct AdamState {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  // Zero moments shaped like params.
  void reset(const ParameterSet& params);
};

// One Adam update with bias correction using Parameter::grad. weight_decay * param
// is added to the gradient before the moment update. Parameters whose grad is
// empty (not reached by the last backward) are left untouched.
void adam_step(ParameterSet& params, AdamState& state, double weight_decay);

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(ParameterSet& params, double max_norm);

// params.bin / optimizer.bin. Entries: u32 name length, name bytes, u32 rows,
// u32 cols, rows*cols little-endian f64. optimizer.bin starts with a u64 step
// counter followed by "m/<name>" and "v/<name>" entries.
void save_parameters(const std::string& path, const ParameterSet& params);
void load_parameters(const std::string& path, ParameterSet& params);
void save_optimizer(const std::string& path, const ParameterSet& params, const AdamState& state);
void load_optimizer(const std::string& path, const ParameterSet& params, AdamState& state);

}  // namespace dualsr
