#include <doctest.h>

#include "dualsr/matrix.hpp"
#include "test_support.hpp"

using namespace dualsr;

namespace {

CsrMatrix random_sparse(std::size_t rows, std::size_t cols, double density, Rng& rng, oracle::Dense& dense) {
  dense = oracle::zeros(rows, cols);
  std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> t;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (rng.uniform() < density) {
        const double v = rng.uniform(-2.0, 2.0);
        dense[r][c] = v;
        t.emplace_back(static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c), v);
      }
  rng.shuffle(std::span(t));
  return CsrMatrix::from_triplets(rows, cols, std::move(t));
}

}  // namespace

TEST_CASE("csr from shuffled triplets has sorted columns per row") {
  Rng rng(3);
  oracle::Dense dense;
  const CsrMatrix m = random_sparse(9, 7, 0.4, rng, dense);
  CHECK(m.row_ptr.size() == 10);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (auto k = m.row_ptr[r] + 1; k < m.row_ptr[r + 1]; ++k) CHECK(m.col_idx[k - 1] < m.col_idx[k]);
  CHECK(oracle::max_abs_diff(dense, m.to_dense()) == 0.0);
}

TEST_CASE("csr products match dense oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t r = 1 + rng.below(12), c = 1 + rng.below(12), d = 1 + rng.below(5);
    oracle::Dense dense;
    const CsrMatrix m = random_sparse(r, c, 0.3, rng, dense);
    const Matrix x = oracle::random_matrix(c, d, rng);
    CHECK(oracle::max_abs_diff(oracle::matmul(dense, oracle::to_dense(x)), m.multiply(x)) < 1e-12);
    oracle::Dense dt = oracle::zeros(c, r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dt[j][i] = dense[i][j];
    const Matrix y = oracle::random_matrix(r, d, rng);
    CHECK(oracle::max_abs_diff(oracle::matmul(dt, oracle::to_dense(y)), m.multiply_transposed(y)) < 1e-12);
  }
}

TEST_CASE("csr shape mismatch is a dimension error") {
  const CsrMatrix m = CsrMatrix::from_triplets(2, 3, {{0, 1, 1.0}});
  CHECK_THROWS_AS(m.multiply(Matrix(2, 1)), DimensionError);
  CHECK_THROWS_AS(m.multiply_transposed(Matrix(3, 1)), DimensionError);
  CHECK_THROWS_AS(CsrMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), DimensionError);
}

TEST_CASE("matrix initializer size is checked") {
  CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), DimensionError);
  const Matrix m(2, 2, {1.0, 2.0, 3.0, 4.0});
  CHECK(m(1, 0) == 3.0);
  CHECK(m.row(1)[1] == 4.0);
}
