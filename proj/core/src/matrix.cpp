#include "vitsi/matrix.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <string>

#include "vitsi/errors.hpp"

namespace vitsi {

template <typename T>
Matrix<T>::Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ConfigError("matrix data length " + std::to_string(data_.size()) + " != " +
                      std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

template class Matrix<double>;
template class Matrix<Dual>;

namespace {

// c (m x n) += a (m x k) * b (k x n), all row-major. Every c(i, j) is
// accumulated over p in increasing order, whichever path computes it.
void gemm_simple(const double* __restrict a, const double* __restrict b, double* __restrict c,
                 std::size_t m, std::size_t k, std::size_t n, std::size_t lda, std::size_t ldb,
                 std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict crow = c + i * ldc;
    const double* __restrict arow = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* __restrict brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// Register tile of kRows x kCols accumulators held across the whole p loop.
// GCC/Clang vector extensions keep the tile in registers at any -march.
using Lane = double __attribute__((vector_size(64)));
constexpr std::size_t kLane = sizeof(Lane) / sizeof(double);
constexpr std::size_t kRows = 8;
constexpr std::size_t kCols = 2 * kLane;

Lane load_lane(const double* p) {
  Lane v;
  std::memcpy(&v, p, sizeof(Lane));
  return v;
}

void gemm_tile(const double* __restrict a, const double* __restrict b, double* __restrict c,
               std::size_t k, std::size_t lda, std::size_t ldb, std::size_t ldc) {
  Lane acc[kRows][2];
  for (std::size_t r = 0; r < kRows; ++r) {
    acc[r][0] = load_lane(c + r * ldc);
    acc[r][1] = load_lane(c + r * ldc + kLane);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const Lane b0 = load_lane(b + p * ldb);
    const Lane b1 = load_lane(b + p * ldb + kLane);
    for (std::size_t r = 0; r < kRows; ++r) {
      const double arp = a[r * lda + p];
      acc[r][0] += arp * b0;
      acc[r][1] += arp * b1;
    }
  }
  for (std::size_t r = 0; r < kRows; ++r) {
    std::memcpy(c + r * ldc, &acc[r][0], sizeof(Lane));
    std::memcpy(c + r * ldc + kLane, &acc[r][1], sizeof(Lane));
  }
}

void gemm_accumulate(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n) {
  const std::size_t m_tiled = m - m % kRows;
  const std::size_t n_tiled = n - n % kCols;
  for (std::size_t i = 0; i < m_tiled; i += kRows) {
    for (std::size_t j = 0; j < n_tiled; j += kCols) gemm_tile(a + i * k, b + j, c + i * n + j, k, k, n, n);
    if (n_tiled < n) gemm_simple(a + i * k, b + n_tiled, c + i * n + n_tiled, kRows, k, n - n_tiled, k, n, n);
  }
  if (m_tiled < m) gemm_simple(a + m_tiled * k, b, c + m_tiled * n, m - m_tiled, k, n, k, n, n);
}

std::vector<double> transpose(const std::vector<double>& src, std::size_t rows, std::size_t cols) {
  std::vector<double> out(src.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

struct Split {
  std::vector<double> value;
  std::vector<double> deriv;
};

Split split(const Matrix<Dual>& m) {
  Split s;
  s.value.resize(m.size());
  s.deriv.resize(m.size());
  const auto& d = m.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    s.value[i] = d[i].value;
    s.deriv[i] = d[i].deriv;
  }
  return s;
}

Matrix<Dual> join(std::size_t rows, std::size_t cols, const std::vector<double>& value,
                  const std::vector<double>& deriv) {
  Matrix<Dual> out(rows, cols);
  auto& d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = Dual(value[i], deriv[i]);
  return out;
}

void check_inner(std::size_t lhs_cols, std::size_t rhs_rows, const char* op) {
  if (lhs_cols != rhs_rows) {
    throw ConfigError(std::string(op) + ": inner dimensions " + std::to_string(lhs_cols) +
                      " and " + std::to_string(rhs_rows) + " differ");
  }
}

}  // namespace

Matrix<double> matmul(const Matrix<double>& a, const Matrix<double>& w) {
  check_inner(a.cols(), w.rows(), "matmul");
  Matrix<double> out(a.rows(), w.cols());
  gemm_accumulate(a.data().data(), w.data().data(), out.data().data(), a.rows(), a.cols(),
                  w.cols());
  return out;
}

Matrix<Dual> matmul(const Matrix<Dual>& a, const Matrix<double>& w) {
  check_inner(a.cols(), w.rows(), "matmul");
  const Split s = split(a);
  const std::size_t m = a.rows(), k = a.cols(), n = w.cols();
  std::vector<double> v(m * n, 0.0), d(m * n, 0.0);
  gemm_accumulate(s.value.data(), w.data().data(), v.data(), m, k, n);
  gemm_accumulate(s.deriv.data(), w.data().data(), d.data(), m, k, n);
  return join(m, n, v, d);
}

Matrix<double> matmul_same(const Matrix<double>& a, const Matrix<double>& b) {
  return matmul(a, b);
}

Matrix<Dual> matmul_same(const Matrix<Dual>& a, const Matrix<Dual>& b) {
  check_inner(a.cols(), b.rows(), "matmul");
  const Split sa = split(a);
  const Split sb = split(b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> v(m * n, 0.0), d(m * n, 0.0);
  gemm_accumulate(sa.value.data(), sb.value.data(), v.data(), m, k, n);
  gemm_accumulate(sa.deriv.data(), sb.value.data(), d.data(), m, k, n);
  gemm_accumulate(sa.value.data(), sb.deriv.data(), d.data(), m, k, n);
  return join(m, n, v, d);
}

Matrix<double> matmul_transposed(const Matrix<double>& a, const Matrix<double>& b) {
  check_inner(a.cols(), b.cols(), "matmul_transposed");
  const std::vector<double> bt = transpose(b.data(), b.rows(), b.cols());
  Matrix<double> out(a.rows(), b.rows());
  gemm_accumulate(a.data().data(), bt.data(), out.data().data(), a.rows(), a.cols(), b.rows());
  return out;
}

Matrix<Dual> matmul_transposed(const Matrix<Dual>& a, const Matrix<Dual>& b) {
  check_inner(a.cols(), b.cols(), "matmul_transposed");
  const Split sa = split(a);
  const Split sb = split(b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const std::vector<double> bv = transpose(sb.value, b.rows(), b.cols());
  const std::vector<double> bd = transpose(sb.deriv, b.rows(), b.cols());
  std::vector<double> v(m * n, 0.0), d(m * n, 0.0);
  gemm_accumulate(sa.value.data(), bv.data(), v.data(), m, k, n);
  gemm_accumulate(sa.deriv.data(), bv.data(), d.data(), m, k, n);
  gemm_accumulate(sa.value.data(), bd.data(), d.data(), m, k, n);
  return join(m, n, v, d);
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& m) {
  Matrix<T> out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto in = m.row(r);
    auto o = out.row(r);
    double shift = -std::numeric_limits<double>::infinity();
    for (const T& x : in) shift = std::max(shift, value_of(x));
    T total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = exp(in[c] - shift);
      total += o[c];
    }
    for (T& x : o) x = x / total;
  }
  return out;
}

template <typename T>
Matrix<T> column_block(const Matrix<T>& m, std::size_t first, std::size_t count) {
  if (first + count > m.cols()) throw ConfigError("column_block out of range");
  Matrix<T> out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto src = m.row(r).subspan(first, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

template <typename T>
void set_column_block(Matrix<T>& m, std::size_t first, const Matrix<T>& block) {
  if (block.rows() != m.rows() || first + block.cols() > m.cols()) {
    throw ConfigError("set_column_block out of range");
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto src = block.row(r);
    std::copy(src.begin(), src.end(), m.row(r).begin() + static_cast<std::ptrdiff_t>(first));
  }
}

template <typename T>
void add_row_vector(Matrix<T>& m, std::span<const double> bias) {
  if (bias.size() != m.cols()) throw ConfigError("bias length does not match matrix columns");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

std::vector<double> values_of(std::span<const Dual> xs) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i].value;
  return out;
}

template Matrix<double> softmax_rows(const Matrix<double>&);
template Matrix<Dual> softmax_rows(const Matrix<Dual>&);
template Matrix<double> column_block(const Matrix<double>&, std::size_t, std::size_t);
template Matrix<Dual> column_block(const Matrix<Dual>&, std::size_t, std::size_t);
template void set_column_block(Matrix<double>&, std::size_t, const Matrix<double>&);
template void set_column_block(Matrix<Dual>&, std::size_t, const Matrix<Dual>&);
template void add_row_vector(Matrix<double>&, std::span<const double>);
template void add_row_vector(Matrix<Dual>&, std::span<const double>);

}  // namespace vitsi
