#include "dualsr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dualsr/binary_io.hpp"

namespace dualsr {

// ---------------------------------------------------------------------------
// ParameterSet

ParameterSet::Id ParameterSet::add(std::string name, Matrix init) {
  if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
  Id id = params_.size();
  index_.emplace(name, id);
  Matrix grad(init.rows, init.cols);
  params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad)});
  return id;
}

Parameter& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return params_[it->second];
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) {
    if (!p.grad.same_shape(p.value)) p.grad = Matrix(p.value.rows, p.value.cols);
    std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
  }
}

void ParameterSet::clear_grad() {
  for (auto& p : params_) p.grad = Matrix();
}

double ParameterSet::squared_norm() const {
  double s = 0.0;
  for (const auto& p : params_)
    for (double v : p.value.data) s += v * v;
  return s;
}

// ---------------------------------------------------------------------------
// Var / Tape

const Matrix& Var::value() const {
  if (!tape_) throw ContractError("Var: not attached to a tape");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractError("Var::scalar on " + v.shape_str() + " value");
  return v.data[0];
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, {}, grad_enabled_ ? &p : nullptr, grad_enabled_});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
#ifdef DUALSR_CHECK_FINITE
  for (double v : value.data)
    if (!std::isfinite(v)) throw NumericalError("non-finite value produced by a forward op");
#endif
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw ContractError("op inputs recorded on a different tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  needs = needs && grad_enabled_;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad.same_shape(n.value)) n.grad = Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss is not on this tape");
  if (nodes_[loss.id()].value.size() != 1)
    throw ContractError("backward: loss must be scalar, got " + nodes_[loss.id()].value.shape_str());
  for (auto& n : nodes_) n.grad = Matrix();
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id()).data[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(n.grad, n.value, *this);
    if (n.param) {
      Matrix& pg = n.param->grad;
      if (!pg.same_shape(n.value)) pg = Matrix(n.value.rows, n.value.cols);
      for (std::size_t k = 0; k < pg.size(); ++k) pg.data[k] += n.grad.data[k];
    }
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.same_shape(n.value)) return n.grad;
  return Matrix(n.value.rows, n.value.cols);
}

// ---------------------------------------------------------------------------
// Ops

namespace ad {
namespace {

struct Broadcast {
  std::size_t rows, cols;
  std::size_t ar, ac, br, bc;
  std::size_t ia(std::size_t r, std::size_t c) const { return (ar == 1 ? 0 : r) * ac + (ac == 1 ? 0 : c); }
  std::size_t ib(std::size_t r, std::size_t c) const { return (br == 1 ? 0 : r) * bc + (bc == 1 ? 0 : c); }
};

Broadcast broadcast(const Matrix& a, const Matrix& b, const char* op) {
  auto dim = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw DimensionError(std::string(op) + ": cannot broadcast " + a.shape_str() + " with " + b.shape_str());
  };
  return {dim(a.rows, b.rows), dim(a.cols, b.cols), a.rows, a.cols, b.rows, b.cols};
}

Tape& tape_of(Var a) {
  if (!a.tape()) throw ContractError("op on detached Var");
  return *a.tape();
}

template <typename F, typename GA, typename GB>
Var binary(Var a, Var b, const char* name, F f, GA grad_a, GB grad_b) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  const Broadcast bc = broadcast(x, y, name);
  Matrix out(bc.rows, bc.cols);
  for (std::size_t r = 0; r < bc.rows; ++r)
    for (std::size_t c = 0; c < bc.cols; ++c) out(r, c) = f(x.data[bc.ia(r, c)], y.data[bc.ib(r, c)]);
  const std::size_t ida = a.id(), idb = b.id();
  return t.record(std::move(out), {a, b}, [=](const Matrix& g, const Matrix&, Tape& tp) {
    const Matrix& xv = tp.value(ida);
    const Matrix& yv = tp.value(idb);
    if (tp.requires_grad(ida)) {
      Matrix& ga = tp.grad_buffer(ida);
      for (std::size_t r = 0; r < bc.rows; ++r)
        for (std::size_t c = 0; c < bc.cols; ++c)
          ga.data[bc.ia(r, c)] += grad_a(g(r, c), xv.data[bc.ia(r, c)], yv.data[bc.ib(r, c)]);
    }
    if (tp.requires_grad(idb)) {
      Matrix& gb = tp.grad_buffer(idb);
      for (std::size_t r = 0; r < bc.rows; ++r)
        for (std::size_t c = 0; c < bc.cols; ++c)
          gb.data[bc.ib(r, c)] += grad_b(g(r, c), xv.data[bc.ia(r, c)], yv.data[bc.ib(r, c)]);
    }
  });
}

// Unary elementwise op; grad(out_grad, input, output) -> input gradient.
template <typename F, typename G>
Var unary(Var a, F f, G grad) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix out(x.rows, x.cols);
  for (std::size_t k = 0; k < x.size(); ++k) out.data[k] = f(x.data[k]);
  const std::size_t ida = a.id();
  return t.record(std::move(out), {a}, [=](const Matrix& g, const Matrix& y, Tape& tp) {
    const Matrix& xv = tp.value(ida);
    Matrix& ga = tp.grad_buffer(ida);
    for (std::size_t k = 0; k < g.size(); ++k) ga.data[k] += grad(g.data[k], xv.data[k], y.data[k]);
  });
}

// out = a * b (nn), a^T * b (tn), a * b^T (nt), accumulated into out.
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* o = out.data.data() + i * out.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double av = a.data[i * a.cols + k];
      if (av == 0.0) continue;
      const double* br = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) o[j] += av * br[j];
    }
  }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* ar = a.data.data() + k * a.cols;
    const double* br = b.data.data() + k * b.cols;
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* o = out.data.data() + i * out.cols;
      for (std::size_t j = 0; j < b.cols; ++j) o[j] += av * br[j];
    }
  }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* br = b.data.data() + j * b.cols;
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += ar[k] * br[k];
      out.data[i * out.cols + j] += s;
    }
  }
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double g, double, double y) { return g / y; },
      [](double g, double x, double y) { return -g * x / (y * y); });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  if (x.cols != y.rows) throw DimensionError("matmul: " + x.shape_str() + " times " + y.shape_str());
  Matrix out(x.rows, y.cols);
  gemm_nn(x, y, out);
  const std::size_t ida = a.id(), idb = b.id();
  return t.record(std::move(out), {a, b}, [=](const Matrix& g, const Matrix&, Tape& tp) {
    if (tp.requires_grad(ida)) gemm_nt(g, tp.value(idb), tp.grad_buffer(ida));
    if (tp.requires_grad(idb)) gemm_tn(tp.value(ida), g, tp.grad_buffer(idb));
  });
}

Var linear(Var x, Var w, Var b) { return add(matmul(x, w), b); }

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double g, double, double) { return c * g; });
}

Var affine(Var a, double alpha, double beta) {
  return unary(
      a, [=](double x) { return alpha * x + beta; }, [alpha](double g, double, double) { return alpha * g; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double g, double, double y) { return g * y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double g, double, double y) { return g * (1.0 - y * y); });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double g, double x, double) { return x > 0.0 ? g : 0.0; });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double g, double, double y) { return g * y; });
}

Var log(Var a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double g, double x, double) { return g / x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [=](double x) { return std::clamp(x, lo, hi); },
      [=](double g, double x, double) { return (x >= lo && x <= hi) ? g : 0.0; });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const double s = std::accumulate(x.data.begin(), x.data.end(), 0.0);
  const std::size_t ida = a.id();
  return t.record(Matrix::scalar(s), {a}, [=](const Matrix& g, const Matrix&, Tape& tp) {
    Matrix& ga = tp.grad_buffer(ida);
    for (double& v : ga.data) v += g.data[0];
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ContractError("mean of empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_squares(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  double s = 0.0;
  for (double v : x.data) s += v * v;
  const std::size_t ida = a.id();
  return t.record(Matrix::scalar(s), {a}, [=](const Matrix& g, const Matrix&, Tape& tp) {
    const Matrix& xv = tp.value(ida);
    Matrix& ga = tp.grad_buffer(ida);
    for (std::size_t k = 0; k < xv.size(); ++k) ga.data[k] += 2.0 * xv.data[k] * g.data[0];
  });
}

Var mean_of(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("mean_of: no operands");
  Tape& t = tape_of(parts[0]);
  const Matrix& first = parts[0].value();
  Matrix out(first.rows, first.cols);
  for (const Var& p : parts) {
    if (!p.value().same_shape(first)) throw DimensionError("mean_of: shape mismatch");
    for (std::size_t k = 0; k < out.size(); ++k) out.data[k] += p.value().data[k];
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (double& v : out.data) v *= inv;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return t.record(std::move(out), parts, [ids, inv](const Matrix& g, const Matrix&, Tape& tp) {
    for (std::size_t id : ids) {
      if (!tp.requires_grad(id)) continue;
      Matrix& gp = tp.grad_buffer(id);
      for (std::size_t k = 0; k < g.size(); ++k) gp.data[k] += inv * g.data[k];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  Tape& t = tape_of(parts[0]);
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids, widths;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row count mismatch");
    cols += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    offset += v.cols;
  }
  return t.record(std::move(out), parts, [ids, widths](const Matrix& g, const Matrix&, Tape& tp) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (tp.requires_grad(ids[p])) {
        Matrix& gp = tp.grad_buffer(ids[p]);
        for (std::size_t r = 0; r < g.rows; ++r)
          for (std::size_t c = 0; c < widths[p]; ++c) gp(r, c) += g(r, off + c);
      }
      off += widths[p];
    }
  });
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("vstack: no operands");
  Tape& t = tape_of(parts[0]);
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids, heights;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw DimensionError("vstack: column count mismatch");
    rows += p.rows();
    ids.push_back(p.id());
    heights.push_back(p.rows());
  }
  Matrix out(rows, cols);
  auto it = out.data.begin();
  for (const Var& p : parts) it = std::copy(p.value().data.begin(), p.value().data.end(), it);
  return t.record(std::move(out), parts, [ids, heights, cols](const Matrix& g, const Matrix&, Tape& tp) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const std::size_t n = heights[p] * cols;
      if (tp.requires_grad(ids[p])) {
        Matrix& gp = tp.grad_buffer(ids[p]);
        for (std::size_t k = 0; k < n; ++k) gp.data[k] += g.data[off + k];
      }
      off += n;
    }
  });
}

Var gather_rows(Var a, std::span<const std::uint32_t> rows) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix out(rows.size(), x.cols);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= x.rows) throw ContractError("gather_rows: row index out of range");
    std::copy(x.row(rows[k]).begin(), x.row(rows[k]).end(), out.row(k).begin());
  }
  const std::size_t ida = a.id();
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  return t.record(std::move(out), {a}, [ida, idx = std::move(idx)](const Matrix& g, const Matrix&, Tape& tp) {
    Matrix& ga = tp.grad_buffer(ida);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto dst = ga.row(idx[k]);
      auto src = g.row(k);
      for (std::size_t c = 0; c < g.cols; ++c) dst[c] += src[c];
    }
  });
}

Var scatter_rows(Var base, std::span<const std::uint32_t> rows, Var values) {
  Tape& t = tape_of(base);
  const Matrix& b = base.value();
  const Matrix& v = values.value();
  if (v.rows != rows.size() || v.cols != b.cols)
    throw DimensionError("scatter_rows: values " + v.shape_str() + " for " + std::to_string(rows.size()) +
                         " rows of " + b.shape_str());
  std::vector<std::uint8_t> replaced(b.rows, 0);
  Matrix out = b;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= b.rows) throw ContractError("scatter_rows: row index out of range");
    if (replaced[rows[k]]) throw ContractError("scatter_rows: duplicate row index");
    replaced[rows[k]] = 1;
    std::copy(v.row(k).begin(), v.row(k).end(), out.row(rows[k]).begin());
  }
  const std::size_t idb = base.id(), idv = values.id();
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  return t.record(std::move(out), {base, values},
                  [=, idx = std::move(idx), replaced = std::move(replaced)](const Matrix& g, const Matrix&, Tape& tp) {
                    if (tp.requires_grad(idb)) {
                      Matrix& gb = tp.grad_buffer(idb);
                      for (std::size_t r = 0; r < g.rows; ++r) {
                        if (replaced[r]) continue;
                        for (std::size_t c = 0; c < g.cols; ++c) gb(r, c) += g(r, c);
                      }
                    }
                    if (tp.requires_grad(idv)) {
                      Matrix& gv = tp.grad_buffer(idv);
                      for (std::size_t k = 0; k < idx.size(); ++k)
                        for (std::size_t c = 0; c < g.cols; ++c) gv(k, c) += g(idx[k], c);
                    }
                  });
}

Var select_rows(Var a, Var b, std::span<const std::uint8_t> take_a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  if (!x.same_shape(y) || take_a.size() != x.rows) throw DimensionError("select_rows: shape mismatch");
  Matrix out(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const auto src = take_a[r] ? x.row(r) : y.row(r);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  const std::size_t ida = a.id(), idb = b.id();
  std::vector<std::uint8_t> mask(take_a.begin(), take_a.end());
  return t.record(std::move(out), {a, b}, [=, mask = std::move(mask)](const Matrix& g, const Matrix&, Tape& tp) {
    for (std::size_t r = 0; r < g.rows; ++r) {
      const std::size_t id = mask[r] ? ida : idb;
      if (!tp.requires_grad(id)) continue;
      Matrix& gt = tp.grad_buffer(id);
      for (std::size_t c = 0; c < g.cols; ++c) gt(r, c) += g(r, c);
    }
  });
}

Var scale_rows(Var a, std::span<const double> factors) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (factors.size() != x.rows) throw DimensionError("scale_rows: factor count mismatch");
  Matrix out = x;
  for (std::size_t r = 0; r < x.rows; ++r)
    for (double& v : out.row(r)) v *= factors[r];
  const std::size_t ida = a.id();
  std::vector<double> f(factors.begin(), factors.end());
  return t.record(std::move(out), {a}, [ida, f = std::move(f)](const Matrix& g, const Matrix&, Tape& tp) {
    Matrix& ga = tp.grad_buffer(ida);
    for (std::size_t r = 0; r < g.rows; ++r)
      for (std::size_t c = 0; c < g.cols; ++c) ga(r, c) += f[r] * g(r, c);
  });
}

Var spmm(const CsrMatrix& s, Var x) {
  Tape& t = tape_of(x);
  Matrix out = s.multiply(x.value());
  const std::size_t idx = x.id();
  // The sparse operand is owned by long-lived graph objects.
  const CsrMatrix* sp = &s;
  return t.record(std::move(out), {x}, [sp, idx](const Matrix& g, const Matrix&, Tape& tp) {
    Matrix gx = sp->multiply_transposed(g);
    Matrix& dst = tp.grad_buffer(idx);
    for (std::size_t k = 0; k < gx.size(); ++k) dst.data[k] += gx.data[k];
  });
}

Var dropout(Var a, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return a;
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(x.rows, x.cols);
  for (double& m : mask.data) m = rng.uniform() >= rate ? keep_scale : 0.0;
  Matrix out = x;
  for (std::size_t k = 0; k < out.size(); ++k) out.data[k] *= mask.data[k];
  const std::size_t ida = a.id();
  return t.record(std::move(out), {a}, [ida, mask = std::move(mask)](const Matrix& g, const Matrix&, Tape& tp) {
    Matrix& ga = tp.grad_buffer(ida);
    for (std::size_t k = 0; k < g.size(); ++k) ga.data[k] += mask.data[k] * g.data[k];
  });
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Optimizer

void AdamState::reset(const ParameterSet& params) {
  first_moment.clear();
  second_moment.clear();
  for (const auto& p : params) {
    first_moment.emplace_back(p.value.rows, p.value.cols);
    second_moment.emplace_back(p.value.rows, p.value.cols);
  }
  step = 0;
}

void adam_step(ParameterSet& params, AdamState& state, double weight_decay) {
  if (state.first_moment.size() != params.size()) state.reset(params);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  std::size_t i = 0;
  for (auto& p : params) {
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    ++i;
    if (!m.same_shape(p.value)) throw DimensionError("adam_step: moment shape mismatch for " + p.name);
    if (!p.grad.same_shape(p.value)) continue;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad.data[k] + weight_decay * p.value.data[k];
      m.data[k] = state.beta1 * m.data[k] + (1.0 - state.beta1) * g;
      v.data[k] = state.beta2 * v.data[k] + (1.0 - state.beta2) * g * g;
      const double mhat = m.data[k] / bc1;
      const double vhat = v.data[k] / bc2;
      p.value.data[k] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad.data) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& p : params)
      for (double& g : p.grad.data) g *= f;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_entry(std::ostream& out, const std::string& name, const Matrix& m) {
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols));
  for (double v : m.data) io::write_le<double>(out, v);
}

bool read_entry(std::istream& in, std::string& name, Matrix& m) {
  if (in.peek() == std::char_traits<char>::eof()) return false;
  const auto len = io::read_le<std::uint32_t>(in);
  name.assign(len, '\0');
  if (!in.read(name.data(), len)) throw ParseError("checkpoint: truncated name");
  const auto rows = io::read_le<std::uint32_t>(in);
  const auto cols = io::read_le<std::uint32_t>(in);
  m = Matrix(rows, cols);
  for (double& v : m.data) v = io::read_le<double>(in);
  return true;
}

void assign_checked(const std::string& name, Matrix& dst, Matrix src) {
  if (!dst.same_shape(src))
    throw ParseError("checkpoint: shape mismatch for " + name + ": " + src.shape_str() + " vs " + dst.shape_str());
  dst = std::move(src);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return in;
}

}  // namespace

void save_parameters(const std::string& path, const ParameterSet& params) {
  auto out = open_out(path);
  for (const auto& p : params) write_entry(out, p.name, p.value);
}

void load_parameters(const std::string& path, ParameterSet& params) {
  auto in = open_in(path);
  std::string name;
  Matrix m;
  std::size_t seen = 0;
  while (read_entry(in, name, m)) {
    if (!params.contains(name)) throw ParseError("checkpoint: unknown parameter " + name);
    assign_checked(name, params.get(name).value, std::move(m));
    ++seen;
  }
  if (seen != params.size()) throw ParseError("checkpoint: parameter count mismatch");
}

void save_optimizer(const std::string& path, const ParameterSet& params, const AdamState& state) {
  auto out = open_out(path);
  io::write_le<std::uint64_t>(out, state.step);
  std::size_t i = 0;
  for (const auto& p : params) {
    Matrix zero(p.value.rows, p.value.cols);
    const bool have = i < state.first_moment.size();
    write_entry(out, "m/" + p.name, have ? state.first_moment[i] : zero);
    write_entry(out, "v/" + p.name, have ? state.second_moment[i] : zero);
    ++i;
  }
}

void load_optimizer(const std::string& path, const ParameterSet& params, AdamState& state) {
  auto in = open_in(path);
  state.reset(params);
  state.step = io::read_le<std::uint64_t>(in);
  std::unordered_map<std::string, std::size_t> index;
  std::size_t i = 0;
  for (const auto& p : params) index.emplace(p.name, i++);
  std::string name;
  Matrix m;
  while (read_entry(in, name, m)) {
    if (name.size() < 3 || name[1] != '/') throw ParseError("optimizer: bad entry " + name);
    auto it = index.find(name.substr(2));
    if (it == index.end()) throw ParseError("optimizer: unknown parameter " + name);
    auto& moments = name[0] == 'm' ? state.first_moment : state.second_moment;
    assign_checked(name, moments[it->second], std::move(m));
  }
}

}  // namespace dualsr
