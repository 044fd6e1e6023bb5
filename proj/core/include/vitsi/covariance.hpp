#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vitsi/matrix.hpp"

namespace vitsi {

/// Noise covariance Σ of the pixel vector.
class Covariance {
 public:
  enum class Kind { kIdentity, kScaledIdentity, kPowerCorrelation, kExplicit };

  static Covariance identity(std::size_t n);
  static Covariance scaled_identity(std::size_t n, double variance);
  /// Σ_ij = rho^|i - j|; requires |rho| < 1.
  static Covariance power_correlation(std::size_t n, double rho);
  /// Checks symmetry and positive definiteness (via Cholesky).
  static Covariance explicit_matrix(Matrix<double> sigma);
  /// s² I with s² the unbiased sample variance of the image pixels.
  static Covariance estimated_from(std::span<const double> image);

  Kind kind() const { return kind_; }
  std::size_t size() const { return n_; }
  double variance() const { return variance_; }
  double rho() const { return rho_; }

  /// Σ v.
  std::vector<double> multiply(std::span<const double> v) const;
  /// vᵀ Σ v.
  double quadratic(std::span<const double> v) const;
  /// C w with C the lower Cholesky factor of Σ; w standard normal gives N(0, Σ).
  std::vector<double> correlate(std::span<const double> w) const;

  Matrix<double> dense() const;
  /// Σ with rows and columns relabeled: result(i, j) = Σ(perm[i], perm[j]).
  Covariance permuted(std::span<const std::size_t> perm) const;

  /// Short label for reports: "identity", "scaled(2)", "power(0.5)", "explicit".
  std::string label() const;

 private:
  Covariance(Kind kind, std::size_t n) : kind_(kind), n_(n) {}

  Kind kind_ = Kind::kIdentity;
  std::size_t n_ = 0;
  double variance_ = 1.0;
  double rho_ = 0.0;
  Matrix<double> sigma_;     // explicit only
  Matrix<double> cholesky_;  // explicit only
};

}  // namespace vitsi
