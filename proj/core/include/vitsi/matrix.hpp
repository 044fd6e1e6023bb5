#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vitsi/dual.hpp"

namespace vitsi {

/// Dense row-major matrix over `double` or `Dual`.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// a · w where w holds real weights (rows of `a` are tokens).
Matrix<double> matmul(const Matrix<double>& a, const Matrix<double>& w);
Matrix<Dual> matmul(const Matrix<Dual>& a, const Matrix<double>& w);

/// a · b for two matrices of the same scalar type.
Matrix<double> matmul_same(const Matrix<double>& a, const Matrix<double>& b);
Matrix<Dual> matmul_same(const Matrix<Dual>& a, const Matrix<Dual>& b);

/// a · bᵀ for two matrices of the same scalar type.
Matrix<double> matmul_transposed(const Matrix<double>& a, const Matrix<double>& b);
Matrix<Dual> matmul_transposed(const Matrix<Dual>& a, const Matrix<Dual>& b);

/// Row-wise softmax with max subtraction; each output row sums to one.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& m);

/// Columns [first, first + count) as a new matrix.
template <typename T>
Matrix<T> column_block(const Matrix<T>& m, std::size_t first, std::size_t count);

/// Writes `block` into columns starting at `first`.
template <typename T>
void set_column_block(Matrix<T>& m, std::size_t first, const Matrix<T>& block);

/// Adds a length-cols bias row to every row.
template <typename T>
void add_row_vector(Matrix<T>& m, std::span<const double> bias);

std::vector<double> values_of(std::span<const Dual> xs);

}  // namespace vitsi
