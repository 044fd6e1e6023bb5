#include "vitsi/selective.hpp"

#include <chrono>
#include <cmath>

#include "vitsi/errors.hpp"

namespace vitsi {

TestSetup make_setup(const ViTWeights& weights, std::vector<double> image, Covariance covariance,
                     double tau) {
  if (covariance.size() != image.size()) {
    throw ConfigError("covariance size " + std::to_string(covariance.size()) + " does not match image size " +
                      std::to_string(image.size()));
  }
  const std::vector<double> scores = attention_map<double>(weights, image);
  TestSetup setup{std::move(image), std::move(covariance), threshold_region(scores, tau)};
  return setup;
}

std::vector<double> eta_vector(const AttentionRegion& region, std::size_t n) {
  if (region.n != n) throw ConfigError("region size does not match image size");
  if (!region.proper()) {
    throw DegenerateRegionError(region.empty() ? "attention region is empty" : "attention region is the full image");
  }
  const double in = 1.0 / static_cast<double>(region.pixels.size());
  const double out = -1.0 / static_cast<double>(n - region.pixels.size());
  std::vector<double> eta(n, out);
  for (std::size_t i : region.pixels) eta[i] = in;
  return eta;
}

namespace {

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double checked_variance(const Covariance& covariance, std::span<const double> eta) {
  const double v = covariance.quadratic(eta);
  if (!(v > 0.0)) throw CovarianceError("etaᵀ Σ eta is not positive");
  return v;
}

}  // namespace

double test_statistic(std::span<const double> image, const Covariance& covariance,
                      const AttentionRegion& region) {
  const std::vector<double> eta = eta_vector(region, image.size());
  return dot(eta, image) / std::sqrt(checked_variance(covariance, eta));
}

double test_statistic(const TestSetup& setup) {
  return test_statistic(setup.image, setup.covariance, setup.region);
}

std::vector<double> InferenceLine::point(double z) const {
  std::vector<double> x(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) x[i] = a[i] + b[i] * z;
  return x;
}

std::vector<Dual> InferenceLine::dual_point(double z) const {
  std::vector<Dual> x(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) x[i] = Dual{a[i] + b[i] * z, b[i]};
  return x;
}

InferenceLine build_line(const TestSetup& setup) {
  const std::size_t n = setup.image.size();
  const std::vector<double> eta = eta_vector(setup.region, n);
  const std::vector<double> sigma_eta = setup.covariance.multiply(eta);
  const double var = dot(eta, sigma_eta);
  if (!(var > 0.0)) throw CovarianceError("etaᵀ Σ eta is not positive");
  const double sd = std::sqrt(var);
  const double proj = dot(eta, setup.image);

  InferenceLine line;
  line.z_obs = proj / sd;
  line.a.resize(n);
  line.b.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    line.b[i] = sigma_eta[i] / sd;
    line.a[i] = setup.image[i] - sigma_eta[i] * (proj / var);
  }
  return line;
}

AttentionObjective::AttentionObjective(const ViTWeights& weights, const InferenceLine& line,
                                       const AttentionRegion& region, double tau)
    : weights_(weights), line_(line), inside_(region.mask()), tau_(tau) {
  if (line.a.size() != weights.config.pixels() || region.n != line.a.size()) {
    throw ConfigError("line, region and model disagree on the number of pixels");
  }
}

void AttentionObjective::values(double z, std::vector<double>& f) const {
  const std::vector<double> x = line_.point(z);
  f = attention_map<double>(weights_, x);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = inside_[i] ? tau_ - f[i] : f[i] - tau_;
}

void AttentionObjective::values_and_derivatives(double z, std::vector<Dual>& f) const {
  const std::vector<Dual> x = line_.dual_point(z);
  f = attention_map<Dual>(weights_, x);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = inside_[i] ? tau_ - f[i] : f[i] - tau_;
}

void FunctionObjective::values(double z, std::vector<double>& f) const {
  std::vector<Dual> d;
  fn_(Dual{z, 0.0}, d);
  f = values_of(d);
}

void FunctionObjective::values_and_derivatives(double z, std::vector<Dual>& f) const {
  fn_(Dual{z, 1.0}, f);
}

std::vector<Dual> f_values(const InferenceLine& line, double z, const ViTWeights& weights, double tau,
                           const AttentionRegion& region) {
  std::vector<Dual> f;
  AttentionObjective(weights, line, region, tau).values_and_derivatives(z, f);
  return f;
}

bool all_negative(std::span<const double> f) {
  for (double v : f)
    if (!(v < 0.0)) return false;
  return true;
}

bool all_negative(std::span<const Dual> f) {
  for (const Dual& v : f)
    if (!(v.value < 0.0)) return false;
  return true;
}

std::string to_string(GridMode mode) {
  switch (mode) {
    case GridMode::kAdaptive:
      return "adaptive";
    case GridMode::kFixed:
      return "fixed";
    case GridMode::kCombination:
      return "combination";
  }
  return "unknown";
}

GridMode parse_grid_mode(std::string_view name) {
  if (name == "adaptive") return GridMode::kAdaptive;
  if (name == "fixed") return GridMode::kFixed;
  if (name == "combination") return GridMode::kCombination;
  throw ConfigError("unknown grid mode '" + std::string(name) + "' (expected adaptive, fixed or combination)");
}

void GridSearchConfig::validate() const {
  if (!(eps_min > 0.0 && eps_min <= eps_max)) throw ConfigError("grid search needs 0 < eps_min <= eps_max");
  if (half_width < 0.0) throw ConfigError("grid half-width S must be positive");
  if (!(near_lipschitz > 0.0 && far_lipschitz_factor > 0.0)) {
    throw ConfigError("Lipschitz constants must be positive");
  }
  if (!(refine_tol > 0.0) || refine_max_iter < 0) throw ConfigError("invalid boundary refinement settings");
  if (mode == GridMode::kFixed && !(fixed_step > 0.0)) throw ConfigError("fixed grid step must be positive");
  if (mode == GridMode::kCombination && !(combination_near_step > 0.0 && combination_far_step > 0.0)) {
    throw ConfigError("combination grid steps must be positive");
  }
}

double GridSearchConfig::scan_half_width(double z_obs) const {
  return half_width > 0.0 ? half_width : 10.0 + std::abs(z_obs);
}

TestResult selective_p(const TestSetup& setup, const ViTWeights& weights, double tau,
                       const GridSearchConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const InferenceLine line = build_line(setup);
  const AttentionObjective objective(weights, line, setup.region, tau);
  RegionSearch search = identify_region(objective, line.z_obs, cfg);

  TestResult result;
  result.z_obs = line.z_obs;
  result.p_selective = truncated_two_sided_p(line.z_obs, search.region.intervals);
  result.p_naive = naive_p(line.z_obs);
  result.p_bonferroni = bonferroni_p(result.p_naive, setup.image.size());
  result.region = std::move(search.region);
  result.n_model_evals = search.evaluations;
  result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace vitsi
