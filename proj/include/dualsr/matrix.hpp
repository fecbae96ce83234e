#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "dualsr/errors.hpp"

namespace dualsr {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::initializer_list<double> values)
      : rows(r), cols(c), data(values) {
    if (data.size() != r * c) throw DimensionError("Matrix: initializer size mismatch");
  }

  static Matrix scalar(double v) { return Matrix(1, 1, v); }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

  bool operator==(const Matrix&) const = default;
};

// Row-compressed sparse matrix with sorted column indices per row.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> row_ptr{0};
  std::vector<std::uint32_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const { return values.size(); }

  // Builds from (row, col, value) triplets; duplicates are not merged.
  static CsrMatrix from_triplets(std::size_t rows, std::size_t cols,
                                 std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> triplets);

  Matrix to_dense() const;

  // out = this * x
  Matrix multiply(const Matrix& x) const;
  // out = this^T * x
  Matrix multiply_transposed(const Matrix& x) const;
};

}  // namespace dualsr
