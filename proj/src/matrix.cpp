#include "dualsr/matrix.hpp"

#include <algorithm>

namespace dualsr {

CsrMatrix CsrMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                   std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
  });
  CsrMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(rows + 1, 0);
  m.col_idx.reserve(triplets.size());
  m.values.reserve(triplets.size());
  for (const auto& [r, c, v] : triplets) {
    if (r >= rows || c >= cols) throw DimensionError("CsrMatrix: triplet index out of range");
    ++m.row_ptr[r + 1];
    m.col_idx.push_back(c);
    m.values.push_back(v);
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

Matrix CsrMatrix::to_dense() const {
  Matrix d(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::uint32_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d(r, col_idx[k]) += values[k];
  return d;
}

Matrix CsrMatrix::multiply(const Matrix& x) const {
  if (x.rows != cols)
    throw DimensionError("spmm: sparse " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " times dense " + x.shape_str());
  Matrix out(rows, x.cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto dst = out.row(r);
    for (std::uint32_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      const double v = values[k];
      auto src = x.row(col_idx[k]);
      for (std::size_t j = 0; j < x.cols; ++j) dst[j] += v * src[j];
    }
  }
  return out;
}

Matrix CsrMatrix::multiply_transposed(const Matrix& x) const {
  if (x.rows != rows)
    throw DimensionError("spmm^T: sparse " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " transposed times dense " + x.shape_str());
  Matrix out(cols, x.cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto src = x.row(r);
    for (std::uint32_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      const double v = values[k];
      auto dst = out.row(col_idx[k]);
      for (std::size_t j = 0; j < x.cols; ++j) dst[j] += v * src[j];
    }
  }
  return out;
}

}  // namespace dualsr
