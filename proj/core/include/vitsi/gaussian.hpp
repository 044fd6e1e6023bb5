#pragma once

#include <cstddef>
#include <span>

namespace vitsi {

/// Stand-in for an infinite endpoint, in standard deviations. Tail mass beyond
/// it (~1e-350) underflows double precision.
inline constexpr double kInfinitySentinel = 40.0;

struct RealInterval {
  double lo = 0.0;
  double hi = 0.0;

  double length() const { return hi - lo; }
  bool contains(double z) const { return lo <= z && z <= hi; }
  bool operator==(const RealInterval&) const = default;
};

/// P(Z > x) for Z ~ N(0, 1). Computed from erfc, so deep right tails keep full
/// relative precision.
double gauss_tail(double x);

/// P(Z in [lo, hi]). Subtracts tails on the side away from zero; when that
/// would cancel most significant digits the density is integrated directly.
double interval_mass(RealInterval iv);

/// P(|Z| > |z_obs| | Z in region) for a standard normal Z truncated to a sorted
/// union of disjoint intervals. Throws DegenerateRegionError if the region has
/// no probability mass.
double truncated_two_sided_p(double z_obs, std::span<const RealInterval> region);

/// Two-sided unconditional p-value 2 P(Z > |z|).
double naive_p(double z_obs);

/// min(1, 2^n p), evaluated in log space so n in the hundreds cannot overflow.
double bonferroni_p(double p_naive, std::size_t n);

}  // namespace vitsi
