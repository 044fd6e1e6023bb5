#include "vitsi/covariance.hpp"

#include <cmath>
#include <sstream>

#include "vitsi/errors.hpp"

namespace vitsi {

namespace {

void check_length(std::size_t got, std::size_t n) {
  if (got != n) {
    throw ConfigError("covariance of size " + std::to_string(n) + " applied to vector of length " +
                      std::to_string(got));
  }
}

Matrix<double> cholesky(const Matrix<double>& a) {
  const std::size_t n = a.rows();
  Matrix<double> l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) {
      throw CovarianceError("covariance is not positive definite (pivot " + std::to_string(j) + ")");
    }
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

}  // namespace

Covariance Covariance::identity(std::size_t n) { return Covariance(Kind::kIdentity, n); }

Covariance Covariance::scaled_identity(std::size_t n, double variance) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw CovarianceError("scaled identity needs a positive finite variance");
  }
  Covariance c(Kind::kScaledIdentity, n);
  c.variance_ = variance;
  return c;
}

Covariance Covariance::power_correlation(std::size_t n, double rho) {
  if (!(std::abs(rho) < 1.0)) throw CovarianceError("power correlation needs |rho| < 1");
  Covariance c(Kind::kPowerCorrelation, n);
  c.rho_ = rho;
  return c;
}

Covariance Covariance::explicit_matrix(Matrix<double> sigma) {
  if (sigma.rows() != sigma.cols()) throw CovarianceError("covariance must be square");
  const std::size_t n = sigma.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double a = sigma(i, j), b = sigma(j, i);
      if (std::abs(a - b) > 1e-12 * std::max({1.0, std::abs(a), std::abs(b)})) {
        throw CovarianceError("covariance is not symmetric");
      }
    }
  }
  Covariance c(Kind::kExplicit, n);
  c.cholesky_ = cholesky(sigma);
  c.sigma_ = std::move(sigma);
  return c;
}

Covariance Covariance::estimated_from(std::span<const double> image) {
  if (image.size() < 2) throw CovarianceError("sample variance needs at least two pixels");
  double mean = 0.0;
  for (double x : image) mean += x;
  mean /= static_cast<double>(image.size());
  double ss = 0.0;
  for (double x : image) ss += (x - mean) * (x - mean);
  return scaled_identity(image.size(), ss / static_cast<double>(image.size() - 1));
}

std::vector<double> Covariance::multiply(std::span<const double> v) const {
  check_length(v.size(), n_);
  std::vector<double> out(n_);
  switch (kind_) {
    case Kind::kIdentity:
      out.assign(v.begin(), v.end());
      break;
    case Kind::kScaledIdentity:
      for (std::size_t i = 0; i < n_; ++i) out[i] = variance_ * v[i];
      break;
    case Kind::kPowerCorrelation: {
      // (Σv)_i = left_i + right_i - v_i with left_i = Σ_{j<=i} rho^{i-j} v_j.
      std::vector<double> left(n_), right(n_);
      for (std::size_t i = 0; i < n_; ++i) left[i] = v[i] + (i ? rho_ * left[i - 1] : 0.0);
      for (std::size_t i = n_; i-- > 0;) right[i] = v[i] + (i + 1 < n_ ? rho_ * right[i + 1] : 0.0);
      for (std::size_t i = 0; i < n_; ++i) out[i] = left[i] + right[i] - v[i];
      break;
    }
    case Kind::kExplicit:
      for (std::size_t i = 0; i < n_; ++i) {
        double s = 0.0;
        const auto row = sigma_.row(i);
        for (std::size_t j = 0; j < n_; ++j) s += row[j] * v[j];
        out[i] = s;
      }
      break;
  }
  return out;
}

double Covariance::quadratic(std::span<const double> v) const {
  const std::vector<double> sv = multiply(v);
  double s = 0.0;
  for (std::size_t i = 0; i < n_; ++i) s += v[i] * sv[i];
  return s;
}

std::vector<double> Covariance::correlate(std::span<const double> w) const {
  check_length(w.size(), n_);
  std::vector<double> out(n_);
  switch (kind_) {
    case Kind::kIdentity:
      out.assign(w.begin(), w.end());
      break;
    case Kind::kScaledIdentity: {
      const double s = std::sqrt(variance_);
      for (std::size_t i = 0; i < n_; ++i) out[i] = s * w[i];
      break;
    }
    case Kind::kPowerCorrelation: {
      // Rows of the Cholesky factor of an AR(1) correlation matrix.
      const double innov = std::sqrt(1.0 - rho_ * rho_);
      for (std::size_t i = 0; i < n_; ++i) out[i] = i ? rho_ * out[i - 1] + innov * w[i] : w[i];
      break;
    }
    case Kind::kExplicit:
      for (std::size_t i = 0; i < n_; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j <= i; ++j) s += cholesky_(i, j) * w[j];
        out[i] = s;
      }
      break;
  }
  return out;
}

Matrix<double> Covariance::dense() const {
  if (kind_ == Kind::kExplicit) return sigma_;
  Matrix<double> m(n_, n_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      switch (kind_) {
        case Kind::kIdentity:
          m(i, j) = i == j ? 1.0 : 0.0;
          break;
        case Kind::kScaledIdentity:
          m(i, j) = i == j ? variance_ : 0.0;
          break;
        case Kind::kPowerCorrelation:
          m(i, j) = std::pow(rho_, static_cast<double>(i > j ? i - j : j - i));
          break;
        case Kind::kExplicit:
          break;
      }
    }
  }
  return m;
}

Covariance Covariance::permuted(std::span<const std::size_t> perm) const {
  check_length(perm.size(), n_);
  if (kind_ == Kind::kIdentity || kind_ == Kind::kScaledIdentity) return *this;
  const Matrix<double> src = dense();
  Matrix<double> out(n_, n_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) out(i, j) = src(perm[i], perm[j]);
  return explicit_matrix(std::move(out));
}

std::string Covariance::label() const {
  std::ostringstream s;
  switch (kind_) {
    case Kind::kIdentity:
      s << "identity";
      break;
    case Kind::kScaledIdentity:
      s << "scaled(" << variance_ << ")";
      break;
    case Kind::kPowerCorrelation:
      s << "power(" << rho_ << ")";
      break;
    case Kind::kExplicit:
      s << "explicit";
      break;
  }
  return s.str();
}

}  // namespace vitsi
