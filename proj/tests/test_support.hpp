#pragma once

// Independent reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dualsr/autodiff.hpp"
#include "dualsr/rng.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense zeros(std::size_t r, std::size_t c) { return Dense(r, std::vector<double>(c, 0.0)); }

inline Dense to_dense(const dualsr::Matrix& m) {
  Dense d = zeros(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) d[r][c] = m(r, c);
  return d;
}

inline Dense matmul(const Dense& a, const Dense& b) {
  const std::size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
  Dense out = zeros(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i][t] * b[t][j];
      out[i][j] = s;
    }
  return out;
}

// D^-1/2 A D^-1/2 of the bipartite graph with users in rows [0, mu) and items
// in [mu, mu + ni), from an explicit dense adjacency.
inline Dense normalized_adjacency(const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges, std::size_t mu,
                                  std::size_t ni) {
  const std::size_t n = mu + ni;
  Dense a = zeros(n, n);
  for (const auto& [u, i] : edges) {
    a[u][mu + i] = 1.0;
    a[mu + i][u] = 1.0;
  }
  std::vector<double> deg(n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) deg[r] += a[r][c];
  Dense d = zeros(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      if (a[r][c] != 0.0) d[r][c] = a[r][c] / std::sqrt(deg[r] * deg[c]);
  return d;
}

inline double max_abs_diff(const Dense& a, const dualsr::Matrix& b) {
  double m = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < a[r].size(); ++c) m = std::max(m, std::abs(a[r][c] - b(r, c)));
  return m;
}

inline dualsr::Matrix random_matrix(std::size_t r, std::size_t c, dualsr::Rng& rng, double lo = -1.0, double hi = 1.0) {
  dualsr::Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

// Largest |a - n| / max(|a|, |n|, 1e-6) between backward() gradients and
// central differences of `loss` over every entry of every parameter.
inline double finite_difference_error(dualsr::ParameterSet& params,
                                      const std::function<dualsr::Var(dualsr::Tape&)>& loss, double h = 1e-5) {
  params.zero_grad();
  {
    dualsr::Tape tape;
    tape.backward(loss(tape));
  }
  double worst = 0.0;
  for (auto& p : params) {
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double orig = p.value.data[k];
      p.value.data[k] = orig + h;
      double up, down;
      {
        dualsr::Tape t(false);
        up = loss(t).scalar();
      }
      p.value.data[k] = orig - h;
      {
        dualsr::Tape t(false);
        down = loss(t).scalar();
      }
      p.value.data[k] = orig;
      const double n = (up - down) / (2.0 * h);
      const double a = p.grad.data[k];
      worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}));
    }
  }
  return worst;
}

// Composite Simpson rule with n (even) intervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, std::size_t n) {
  const double h = (b - a) / static_cast<double>(n);
  double s = f(a) + f(b);
  for (std::size_t k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * f(a + h * static_cast<double>(k));
  return s * h / 3.0;
}

// Fresh empty directory under the system temp path.
inline std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dualsr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace oracle
