#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vitsi/attention_map.hpp"
#include "vitsi/covariance.hpp"
#include "vitsi/dual.hpp"
#include "vitsi/gaussian.hpp"
#include "vitsi/vit.hpp"

namespace vitsi {

struct TestSetup {
  std::vector<double> image;
  Covariance covariance = Covariance::identity(0);
  AttentionRegion region;
};

/// Runs the attention map on `image` and thresholds it at tau.
TestSetup make_setup(const ViTWeights& weights, std::vector<double> image, Covariance covariance,
                     double tau = kDefaultTau);

/// 1/|M| on the region, -1/|M^c| off it. Throws DegenerateRegionError unless
/// the region is proper.
std::vector<double> eta_vector(const AttentionRegion& region, std::size_t n);

/// ηᵀX / sqrt(ηᵀΣη).
double test_statistic(std::span<const double> image, const Covariance& covariance,
                      const AttentionRegion& region);
double test_statistic(const TestSetup& setup);

/// X(z) = a + b z passes through the observed image at z = z_obs.
struct InferenceLine {
  std::vector<double> a;
  std::vector<double> b;
  double z_obs = 0.0;

  std::vector<double> point(double z) const;
  std::vector<Dual> dual_point(double z) const;  ///< seeded with dz = 1
};

InferenceLine build_line(const TestSetup& setup);

/// The constraint functions f_1..f_m along a line; z is in the truncation
/// region iff every f_i(z) < 0.
class LineObjective {
 public:
  virtual ~LineObjective() = default;
  virtual void values(double z, std::vector<double>& f) const = 0;
  virtual void values_and_derivatives(double z, std::vector<Dual>& f) const = 0;
};

/// f_i(z) = tau - A_i(a + bz) for i in the observed region, A_i(a + bz) - tau
/// otherwise.
class AttentionObjective final : public LineObjective {
 public:
  AttentionObjective(const ViTWeights& weights, const InferenceLine& line, const AttentionRegion& region,
                     double tau);

  void values(double z, std::vector<double>& f) const override;
  void values_and_derivatives(double z, std::vector<Dual>& f) const override;

 private:
  const ViTWeights& weights_;
  const InferenceLine& line_;
  std::vector<bool> inside_;
  double tau_;
};

/// Wraps arbitrary callables; used for analytic selectors in tests.
class FunctionObjective final : public LineObjective {
 public:
  using DualFn = std::function<void(Dual z, std::vector<Dual>& f)>;
  explicit FunctionObjective(DualFn fn) : fn_(std::move(fn)) {}

  void values(double z, std::vector<double>& f) const override;
  void values_and_derivatives(double z, std::vector<Dual>& f) const override;

 private:
  DualFn fn_;
};

/// f and f' at z for the ViT pipeline; convenience for callers without an
/// objective object.
std::vector<Dual> f_values(const InferenceLine& line, double z, const ViTWeights& weights, double tau,
                           const AttentionRegion& region);

bool all_negative(std::span<const double> f);
bool all_negative(std::span<const Dual> f);

enum class GridMode { kAdaptive, kFixed, kCombination };

std::string to_string(GridMode mode);
GridMode parse_grid_mode(std::string_view name);

struct GridSearchConfig {
  double half_width = 0.0;  ///< S; 0 selects 10 + |z_obs|
  double eps_min = 1e-4;
  double eps_max = 0.2;
  double near_radius = 0.1;
  double far_lipschitz_factor = 10.0;
  double near_lipschitz = 1.0;
  double refine_tol = 1e-10;
  int refine_max_iter = 60;
  GridMode mode = GridMode::kAdaptive;
  double fixed_step = 1e-3;
  double combination_near_step = 1e-4;
  double combination_far_step = 1e-2;

  void validate() const;
  double scan_half_width(double z_obs) const;
};

/// d(z) before clamping; +inf when no candidate constraint exists.
double raw_step_width(std::span<const Dual> f, bool in_region, double z, double z_obs,
                      const GridSearchConfig& cfg);

/// min(eps_max, max(d(z), eps_min)).
double adaptive_step(std::span<const Dual> f, bool in_region, double z, double z_obs,
                     const GridSearchConfig& cfg);

struct TruncatedRegion {
  std::vector<RealInterval> intervals;  ///< sorted, disjoint, includes `guaranteed`
  RealInterval guaranteed;              ///< J(z_obs)

  bool contains(double z) const;
};

struct GridPoint {
  double z = 0.0;
  bool member = false;
  double step = 0.0;   ///< distance to the next grid point
  double width = 0.0;  ///< unclamped d(z); NaN outside adaptive mode
};

struct RegionSearch {
  TruncatedRegion region;
  std::size_t evaluations = 0;
  std::vector<GridPoint> trace;  ///< filled only when requested
};

/// Walks [-S, S], refines membership changes by bisection and adds J(z_obs).
/// Throws ConsistencyError if z_obs itself fails the membership test.
RegionSearch identify_region(const LineObjective& objective, double z_obs, const GridSearchConfig& cfg,
                             bool keep_trace = false);

struct TestResult {
  double p_selective = 0.0;
  double p_naive = 0.0;
  double p_bonferroni = 0.0;
  double z_obs = 0.0;
  TruncatedRegion region;
  std::size_t n_model_evals = 0;
  double wall_time = 0.0;
};

TestResult selective_p(const TestSetup& setup, const ViTWeights& weights, double tau,
                       const GridSearchConfig& cfg);

/// Strict-inequality permutation p-value. Permuted images whose own region is
/// degenerate are redrawn; `redraws` counts them.
struct PermutationResult {
  double p = 0.0;
  std::size_t redraws = 0;
};

using PermutationSource = std::function<std::vector<std::size_t>()>;

PermutationResult permutation_p(const TestSetup& setup, const ViTWeights& weights, double tau,
                                std::size_t permutations, std::uint64_t seed);
PermutationResult permutation_p(const TestSetup& setup, const ViTWeights& weights, double tau,
                                std::size_t permutations, const PermutationSource& draw);

}  // namespace vitsi
