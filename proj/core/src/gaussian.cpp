#include "vitsi/gaussian.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "vitsi/errors.hpp"

namespace vitsi {

namespace {

constexpr double kInvSqrt2 = 1.0 / std::numbers::sqrt2;
constexpr double kInvSqrt2Pi = std::numbers::inv_sqrtpi * kInvSqrt2;

// Below this fraction of the larger tail the subtraction has lost three or
// more digits; the interval is then narrow enough for direct quadrature.
constexpr double kCancellationRatio = 1e-3;

double density(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// 10-point Gauss-Legendre on [lo, hi]. Only reached for intervals of width
// well below the density's length scale, where it is exact to rounding.
double direct_mass(double lo, double hi) {
  static constexpr std::array<double, 5> kNodes = {
      0.14887433898163121088, 0.43339539412924719080, 0.67940956829902440623,
      0.86506336668898451073, 0.97390652851717172008};
  static constexpr std::array<double, 5> kWeights = {
      0.29552422471475287017, 0.26926671930999635509, 0.21908636251598204400,
      0.14945134915058059315, 0.06667134430868813759};
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  double sum = 0.0;
  for (std::size_t i = 0; i < kNodes.size(); ++i) {
    sum += kWeights[i] * (density(mid - half * kNodes[i]) + density(mid + half * kNodes[i]));
  }
  return sum * half;
}

}  // namespace

double gauss_tail(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

double interval_mass(RealInterval iv) {
  if (std::isnan(iv.lo) || std::isnan(iv.hi) || iv.lo > iv.hi) {
    throw DomainError("interval_mass: invalid interval [" + std::to_string(iv.lo) + ", " +
                      std::to_string(iv.hi) + "]");
  }
  if (iv.lo == iv.hi) return 0.0;

  double mass = 0.0;
  double scale = 1.0;
  if (iv.lo >= 0.0) {
    scale = gauss_tail(iv.lo);
    mass = scale - gauss_tail(iv.hi);
  } else if (iv.hi <= 0.0) {
    scale = gauss_tail(-iv.hi);
    mass = scale - gauss_tail(-iv.lo);
  } else {
    mass = 1.0 - gauss_tail(-iv.lo) - gauss_tail(iv.hi);
  }
  if (mass < kCancellationRatio * scale && std::isfinite(iv.lo) && std::isfinite(iv.hi)) {
    mass = direct_mass(iv.lo, iv.hi);
  }
  return std::max(mass, 0.0);
}

double truncated_two_sided_p(double z_obs, std::span<const RealInterval> region) {
  const double cut = std::abs(z_obs);
  double inner = 0.0;
  double outer = 0.0;
  for (std::size_t i = 0; i < region.size(); ++i) {
    const RealInterval& iv = region[i];
    if (!(iv.lo <= iv.hi)) throw DomainError("truncated_two_sided_p: interval with lo > hi");
    if (i > 0 && region[i - 1].hi > iv.lo) {
      throw DomainError("truncated_two_sided_p: intervals must be sorted and disjoint");
    }
    if (iv.lo < -cut) outer += interval_mass({iv.lo, std::min(iv.hi, -cut)});
    if (iv.hi > cut) outer += interval_mass({std::max(iv.lo, cut), iv.hi});
    const double lo = std::max(iv.lo, -cut);
    const double hi = std::min(iv.hi, cut);
    if (lo < hi) inner += interval_mass({lo, hi});
  }
  const double total = inner + outer;
  if (!(total > 0.0)) {
    throw DegenerateRegionError("truncation region carries no probability mass");
  }
  return std::clamp(outer / total, 0.0, 1.0);
}

double naive_p(double z_obs) { return std::min(1.0, 2.0 * gauss_tail(std::abs(z_obs))); }

double bonferroni_p(double p_naive, std::size_t n) {
  if (p_naive <= 0.0) return 0.0;
  const double log_p = std::log(p_naive) + static_cast<double>(n) * std::numbers::ln2;
  return log_p >= 0.0 ? 1.0 : std::exp(log_p);
}

}  // namespace vitsi
