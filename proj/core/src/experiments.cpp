#include "vitsi/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "vitsi/errors.hpp"

namespace vitsi {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Covariance generating_covariance(const ExperimentConfig& config) {
  if (config.covariance == CovarianceMode::kPower) return Covariance::power_correlation(config.n, config.rho);
  return Covariance::identity(config.n);
}

bool wants(const ExperimentConfig& config, Method m) {
  return std::find(config.methods.begin(), config.methods.end(), m) != config.methods.end();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

std::vector<double> gen_null(const Covariance& covariance, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> w(covariance.size());
  for (double& x : w) x = normal(rng);
  return covariance.correlate(w);
}

std::vector<std::size_t> random_square_region(std::size_t n, std::uint64_t seed) {
  const std::size_t side = image_side_for(n);
  const std::size_t square = std::max<std::size_t>(1, side / 4);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> offset(0, side - square);
  const std::size_t row0 = offset(rng);
  const std::size_t col0 = offset(rng);
  std::vector<std::size_t> region;
  region.reserve(square * square);
  for (std::size_t r = row0; r < row0 + square; ++r)
    for (std::size_t c = col0; c < col0 + square; ++c) region.push_back(r * side + c);
  return region;
}

SyntheticImage gen_signal(const SyntheticSpec& spec, std::uint64_t seed) {
  if (!(spec.delta >= 0.0)) throw ConfigError("signal magnitude must be non-negative");
  if (spec.covariance.size() != spec.n) throw ConfigError("covariance size does not match n");
  SyntheticImage out{gen_null(spec.covariance, seed), random_square_region(spec.n, derive_seed(seed, 1))};
  for (std::size_t i : out.signal_region) out.image[i] += spec.delta;
  return out;
}

std::string to_string(Method method) {
  switch (method) {
    case Method::kAdaptive:
      return "adaptive";
    case Method::kNaive:
      return "naive";
    case Method::kBonferroni:
      return "bonferroni";
    case Method::kPermutation:
      return "permutation";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "adaptive") return Method::kAdaptive;
  if (name == "naive") return Method::kNaive;
  if (name == "bonferroni") return Method::kBonferroni;
  if (name == "permutation") return Method::kPermutation;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected adaptive, naive, bonferroni, permutation)");
}

std::string to_string(CovarianceMode mode) {
  switch (mode) {
    case CovarianceMode::kIdentity:
      return "identity";
    case CovarianceMode::kPower:
      return "power";
    case CovarianceMode::kEstimated:
      return "estimated";
  }
  return "unknown";
}

CovarianceMode parse_covariance_mode(std::string_view name) {
  if (name == "identity") return CovarianceMode::kIdentity;
  if (name == "power") return CovarianceMode::kPower;
  if (name == "estimated") return CovarianceMode::kEstimated;
  throw ConfigError("unknown covariance '" + std::string(name) + "' (expected identity, power, estimated)");
}

std::string ExperimentConfig::fingerprint() const {
  std::ostringstream s;
  s.precision(17);
  const ViTConfig vc = make_config(arch, image_side_for(n), patch_size);
  s << "arch=" << arch << ";n=" << n << ";patch=" << vc.patch_size << ";cov=" << to_string(covariance);
  if (covariance == CovarianceMode::kPower) s << "(" << rho << ")";
  s << ";tau=" << tau << ";S=" << (grid.half_width > 0.0 ? std::to_string(grid.half_width) : "10+|z|")
    << ";eps_min=" << grid.eps_min << ";eps_max=" << grid.eps_max << ";mode=" << to_string(grid.mode)
    << ";seed=" << seed << ";methods=";
  for (std::size_t i = 0; i < methods.size(); ++i) s << (i ? "," : "") << to_string(methods[i]);
  if (wants(*this, Method::kPermutation)) s << ";B=" << permutations;
  return s.str();
}

Covariance make_covariance(const ExperimentConfig& config, const std::vector<double>& image) {
  switch (config.covariance) {
    case CovarianceMode::kIdentity:
      return Covariance::identity(image.size());
    case CovarianceMode::kPower:
      return Covariance::power_correlation(image.size(), config.rho);
    case CovarianceMode::kEstimated:
      return Covariance::estimated_from(image);
  }
  throw ConfigError("unknown covariance mode");
}

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& body) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count && !failed; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

TrialRecord run_trial(const ViTWeights& weights, const ExperimentConfig& config, std::vector<double> image,
                      std::size_t index, std::uint64_t seed) {
  TrialRecord rec;
  rec.index = index;
  rec.seed = seed;
  rec.mode = to_string(config.grid.mode);
  rec.covariance = to_string(config.covariance);
  try {
    Covariance cov = make_covariance(config, image);
    const TestSetup setup = make_setup(weights, std::move(image), std::move(cov), config.tau);
    if (wants(config, Method::kAdaptive)) {
      const TestResult r = selective_p(setup, weights, config.tau, config.grid);
      rec.z_obs = r.z_obs;
      rec.p_selective = r.p_selective;
      rec.p_naive = r.p_naive;
      rec.p_bonferroni = r.p_bonferroni;
      rec.n_intervals = r.region.intervals.size();
      rec.n_model_evals = r.n_model_evals;
      rec.wall_time_s = r.wall_time;
    } else {
      rec.z_obs = test_statistic(setup);
      rec.p_naive = naive_p(rec.z_obs);
      rec.p_bonferroni = bonferroni_p(rec.p_naive, setup.image.size());
    }
    if (wants(config, Method::kPermutation)) {
      rec.p_permutation = permutation_p(setup, weights, config.tau, config.permutations, derive_seed(seed, 2)).p;
    }
  } catch (const DegenerateRegionError&) {
    rec = TrialRecord{index, seed, 0.0, to_string(config.grid.mode), to_string(config.covariance), "skipped"};
  }
  return rec;
}

TrialBatch run_type1(const ViTWeights& weights, const ExperimentConfig& config, std::size_t n_images) {
  return run_power(weights, config, {0.0}, n_images);
}

TrialBatch run_power(const ViTWeights& weights, const ExperimentConfig& config, const std::vector<double>& deltas,
                     std::size_t n_images) {
  const Covariance gen = generating_covariance(config);
  TrialBatch batch{config, config.fingerprint(), std::vector<TrialRecord>(deltas.size() * n_images)};
  // The same noise seeds are reused for every delta.
  parallel_for(batch.records.size(), config.workers, [&](std::size_t k) {
    const std::size_t i = k % n_images;
    const double delta = deltas[k / n_images];
    const std::uint64_t seed = derive_seed(config.seed, i);
    SyntheticImage img = gen_signal({config.n, delta, gen}, seed);
    batch.records[k] = run_trial(weights, config, std::move(img.image), i, seed);
    batch.records[k].delta = delta;
  });
  return batch;
}

TrialBatch run_timing(const ViTWeights& weights, const ExperimentConfig& config, const std::vector<GridMode>& modes,
                      std::size_t n_images) {
  const Covariance gen = generating_covariance(config);
  TrialBatch batch{config, config.fingerprint(), std::vector<TrialRecord>(modes.size() * n_images)};
  parallel_for(batch.records.size(), config.workers, [&](std::size_t k) {
    const std::size_t i = k % n_images;
    ExperimentConfig local = config;
    local.grid.mode = modes[k / n_images];
    local.methods = {Method::kAdaptive};
    const std::uint64_t seed = derive_seed(config.seed, i);
    batch.records[k] = run_trial(weights, local, gen_null(gen, seed), i, seed);
  });
  return batch;
}

RateEstimate rejection_rate(std::size_t rejections, std::size_t tests) {
  RateEstimate r{rejections, tests, 0.0, 0.0, 1.0};
  if (tests == 0) return r;
  constexpr double z = 1.959963984540054;
  const double m = static_cast<double>(tests);
  const double p = static_cast<double>(rejections) / m;
  const double denom = 1.0 + z * z / m;
  const double center = (p + z * z / (2.0 * m)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / m + z * z / (4.0 * m * m));
  r.rate = p;
  r.ci_lo = std::max(0.0, center - half);
  r.ci_hi = std::min(1.0, center + half);
  return r;
}

double binomial_upper_tail(std::size_t rejections, std::size_t tests, double alpha) {
  if (rejections == 0) return 1.0;
  if (rejections > tests) return 0.0;
  const double m = static_cast<double>(tests);
  double total = 0.0;
  for (std::size_t k = rejections; k <= tests; ++k) {
    const double kk = static_cast<double>(k);
    total += std::exp(std::lgamma(m + 1) - std::lgamma(kk + 1) - std::lgamma(m - kk + 1) + kk * std::log(alpha) +
                      (m - kk) * std::log1p(-alpha));
  }
  return std::min(1.0, total);
}

MethodRates summarize(const TrialBatch& batch, const std::function<bool(const TrialRecord&)>& filter) {
  MethodRates rates;
  for (Method m : batch.config.methods) {
    const std::string name = to_string(m);
    for (double alpha : batch.config.alphas) {
      std::size_t rejections = 0, tests = 0;
      for (const TrialRecord& rec : batch.records) {
        if (!rec.ok() || (filter && !filter(rec))) continue;
        double p = rec.p_naive;
        if (m == Method::kAdaptive) p = rec.p_selective;
        if (m == Method::kBonferroni) p = rec.p_bonferroni;
        if (m == Method::kPermutation) p = rec.p_permutation;
        ++tests;
        if (p <= alpha) ++rejections;
      }
      rates[name][alpha] = rejection_rate(rejections, tests);
    }
  }
  return rates;
}

std::size_t skipped_count(const TrialBatch& batch) {
  return static_cast<std::size_t>(
      std::count_if(batch.records.begin(), batch.records.end(), [](const TrialRecord& r) { return !r.ok(); }));
}

std::vector<TimingSummary> summarize_timing(const TrialBatch& batch) {
  std::vector<TimingSummary> out;
  for (const TrialRecord& rec : batch.records) {
    if (!rec.ok()) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const TimingSummary& t) { return t.mode == rec.mode; });
    if (it == out.end()) it = out.insert(out.end(), TimingSummary{rec.mode});
    ++it->images;
    it->mean_evals += static_cast<double>(rec.n_model_evals);
    it->mean_wall_time_s += rec.wall_time_s;
  }
  for (TimingSummary& t : out) {
    t.mean_evals /= static_cast<double>(t.images);
    t.mean_wall_time_s /= static_cast<double>(t.images);
  }
  return out;
}

double kolmogorov_pvalue(double distance, std::size_t samples) {
  const double rm = std::sqrt(static_cast<double>(samples));
  const double lambda = (rm + 0.12 + 0.11 / rm) * distance;
  if (lambda <= 0.0) return 1.0;
  double q = 0.0;
  if (lambda < 1.18) {
    // Theta-function form; converges fast for small lambda.
    const double c = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int k = 1; k <= 50; ++k) s += std::exp(-static_cast<double>((2 * k - 1) * (2 * k - 1)) * c);
    q = 1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s;
  } else {
    for (int k = 1; k <= 100; ++k) {
      q += (k % 2 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * lambda * lambda);
    }
  }
  return std::clamp(q, 0.0, 1.0);
}

UniformityReport uniformity_check(std::vector<double> pvalues, const std::vector<double>& alphas) {
  if (pvalues.size() < 100) throw ConfigError("uniformity check needs at least 100 p-values");
  std::sort(pvalues.begin(), pvalues.end());
  const double m = static_cast<double>(pvalues.size());
  UniformityReport rep;
  for (std::size_t i = 0; i < pvalues.size(); ++i) {
    const double p = pvalues[i];
    rep.ks_distance = std::max({rep.ks_distance, static_cast<double>(i + 1) / m - p, p - static_cast<double>(i) / m});
  }
  rep.ks_pvalue = kolmogorov_pvalue(rep.ks_distance, pvalues.size());
  for (double alpha : alphas) {
    const auto below = static_cast<std::size_t>(std::upper_bound(pvalues.begin(), pvalues.end(), alpha) - pvalues.begin());
    rep.ecdf[alpha] = rejection_rate(below, pvalues.size());
  }
  return rep;
}

}  // namespace vitsi
