#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vitsi/covariance.hpp"
#include "vitsi/selective.hpp"
#include "vitsi/vit.hpp"

namespace vitsi {

/// Independent stream seed for trial `index` under `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// X = C w, w ~ N(0, I), C the lower Cholesky factor of Σ.
std::vector<double> gen_null(const Covariance& covariance, std::uint64_t seed);

struct SyntheticSpec {
  std::size_t n = 256;
  double delta = 0.0;
  Covariance covariance = Covariance::identity(256);
};

struct SyntheticImage {
  std::vector<double> image;
  std::vector<std::size_t> signal_region;  ///< sorted
};

/// Square of side floor(sqrt(n) / 4) at a uniform admissible offset; at least
/// one pixel.
std::vector<std::size_t> random_square_region(std::size_t n, std::uint64_t seed);

/// Null draw plus delta on a random square region.
SyntheticImage gen_signal(const SyntheticSpec& spec, std::uint64_t seed);

enum class Method { kAdaptive, kNaive, kBonferroni, kPermutation };

std::string to_string(Method method);
Method parse_method(std::string_view name);

enum class CovarianceMode { kIdentity, kPower, kEstimated };

std::string to_string(CovarianceMode mode);
CovarianceMode parse_covariance_mode(std::string_view name);

struct ExperimentConfig {
  std::string arch = "base";
  std::size_t n = 256;
  std::optional<std::size_t> patch_size;
  CovarianceMode covariance = CovarianceMode::kIdentity;
  double rho = 0.5;
  double tau = kDefaultTau;
  GridSearchConfig grid;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::vector<double> alphas = {0.01, 0.05, 0.10};
  std::vector<Method> methods = {Method::kAdaptive, Method::kNaive, Method::kBonferroni};
  std::size_t permutations = 1000;

  /// Text that pins every setting that can change a result.
  std::string fingerprint() const;
};

/// Σ for an image under the configured mode; estimated mode looks at the image.
Covariance make_covariance(const ExperimentConfig& config, const std::vector<double>& image);

struct TrialRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double delta = 0.0;
  std::string mode = "adaptive";
  std::string covariance;
  std::string status = "ok";  ///< "ok" or "skipped"
  double z_obs = std::numeric_limits<double>::quiet_NaN();
  double p_selective = std::numeric_limits<double>::quiet_NaN();
  double p_naive = std::numeric_limits<double>::quiet_NaN();
  double p_bonferroni = std::numeric_limits<double>::quiet_NaN();
  double p_permutation = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_intervals = 0;
  std::size_t n_model_evals = 0;
  double wall_time_s = 0.0;

  bool ok() const { return status == "ok"; }
};

struct TrialBatch {
  ExperimentConfig config;
  std::string fingerprint;
  std::vector<TrialRecord> records;  ///< ordered by (delta or mode, index)
};

/// Runs body(i) for i in [0, count) on `workers` threads. Exceptions from body
/// are rethrown after all workers stop.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& body);

/// One test on one image; degenerate regions yield a "skipped" record.
TrialRecord run_trial(const ViTWeights& weights, const ExperimentConfig& config, std::vector<double> image,
                      std::size_t index, std::uint64_t seed);

TrialBatch run_type1(const ViTWeights& weights, const ExperimentConfig& config, std::size_t n_images);
TrialBatch run_power(const ViTWeights& weights, const ExperimentConfig& config, const std::vector<double>& deltas,
                     std::size_t n_images);
/// Every image is tested once per mode with the same seeds.
TrialBatch run_timing(const ViTWeights& weights, const ExperimentConfig& config,
                      const std::vector<GridMode>& modes, std::size_t n_images);

struct RateEstimate {
  std::size_t rejections = 0;
  std::size_t tests = 0;
  double rate = 0.0;
  double ci_lo = 0.0;  ///< Wilson 95%
  double ci_hi = 0.0;
};

RateEstimate rejection_rate(std::size_t rejections, std::size_t tests);

/// P(Binomial(tests, alpha) >= rejections).
double binomial_upper_tail(std::size_t rejections, std::size_t tests, double alpha);

/// key: method name; alpha -> rate
using MethodRates = std::map<std::string, std::map<double, RateEstimate>>;

/// Rates over non-skipped records, optionally restricted by a filter.
MethodRates summarize(const TrialBatch& batch, const std::function<bool(const TrialRecord&)>& filter = {});
std::size_t skipped_count(const TrialBatch& batch);

struct TimingSummary {
  std::string mode;
  std::size_t images = 0;
  double mean_evals = 0.0;
  double mean_wall_time_s = 0.0;
};

std::vector<TimingSummary> summarize_timing(const TrialBatch& batch);

struct UniformityReport {
  std::map<double, RateEstimate> ecdf;  ///< alpha -> fraction of p <= alpha
  double ks_distance = 0.0;
  double ks_pvalue = 0.0;
};

/// Needs at least 100 p-values.
UniformityReport uniformity_check(std::vector<double> pvalues, const std::vector<double>& alphas);

/// Asymptotic Kolmogorov p-value with the finite-sample correction
/// lambda = (sqrt(m) + 0.12 + 0.11 / sqrt(m)) D.
double kolmogorov_pvalue(double distance, std::size_t samples);

/// CSV columns: seed,n,arch,covariance,tau,z_obs,p_selective,p_naive,
/// p_bonferroni,n_intervals,n_model_evals,wall_time_s,status followed by
/// mode,delta,p_permutation.
void write_trials_csv(std::ostream& out, const TrialBatch& batch);

/// {"config": ..., "<method>": {"<alpha>": {rate, ci_lo, ci_hi, ...}}, "skipped_count": k}
std::string summary_json(const ExperimentConfig& config, const MethodRates& rates, std::size_t skipped);

/// One TestResult as a JSON object with the CSV field names.
std::string test_result_json(const TestResult& result, std::uint64_t seed, std::size_t n, const std::string& arch,
                             const std::string& covariance, double tau);

}  // namespace vitsi
