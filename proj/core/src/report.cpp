#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "vitsi/experiments.hpp"

namespace vitsi {

namespace {

std::string alpha_key(double alpha) {
  std::ostringstream s;
  s << alpha;
  return s.str();
}

// NaN has no JSON spelling; skipped tests serialize missing values as null.
nlohmann::json number_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

// Shortest text that parses back to the same double.
std::string num(double x) {
  char buf[32];
  return {buf, std::to_chars(buf, buf + sizeof buf, x).ptr};
}

nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json grid = {{"S", c.grid.half_width > 0.0 ? nlohmann::json(c.grid.half_width) : nlohmann::json("10+|z_obs|")},
                         {"eps_min", c.grid.eps_min},
                         {"eps_max", c.grid.eps_max},
                         {"near_radius", c.grid.near_radius},
                         {"far_lipschitz_factor", c.grid.far_lipschitz_factor},
                         {"near_lipschitz", c.grid.near_lipschitz},
                         {"refine_tol", c.grid.refine_tol},
                         {"mode", to_string(c.grid.mode)}};
  nlohmann::json methods = nlohmann::json::array();
  for (Method m : c.methods) methods.push_back(to_string(m));
  nlohmann::json j = {{"arch", c.arch},
                      {"n", c.n},
                      {"covariance", to_string(c.covariance)},
                      {"tau", c.tau},
                      {"seed", c.seed},
                      {"workers", c.workers},
                      {"alphas", c.alphas},
                      {"methods", methods},
                      {"grid", grid},
                      {"fingerprint", c.fingerprint()}};
  if (c.patch_size) j["patch_size"] = *c.patch_size;
  if (c.covariance == CovarianceMode::kPower) j["rho"] = c.rho;
  if (std::find(c.methods.begin(), c.methods.end(), Method::kPermutation) != c.methods.end()) {
    j["permutations"] = c.permutations;
  }
  return j;
}

}  // namespace

void write_trials_csv(std::ostream& out, const TrialBatch& batch) {
  const ExperimentConfig& c = batch.config;
  out << "seed,n,arch,covariance,tau,z_obs,p_selective,p_naive,p_bonferroni,n_intervals,n_model_evals,"
         "wall_time_s,status,mode,delta,p_permutation\n";
  for (const TrialRecord& r : batch.records) {
    out << r.seed << ',' << c.n << ',' << c.arch << ',' << r.covariance << ',' << num(c.tau) << ',' << num(r.z_obs)
        << ',' << num(r.p_selective) << ',' << num(r.p_naive) << ',' << num(r.p_bonferroni) << ',' << r.n_intervals
        << ',' << r.n_model_evals << ',' << num(r.wall_time_s) << ',' << r.status << ',' << r.mode << ','
        << num(r.delta) << ',' << num(r.p_permutation) << '\n';
  }
}

std::string summary_json(const ExperimentConfig& config, const MethodRates& rates, std::size_t skipped) {
  nlohmann::json j;
  j["config"] = config_json(config);
  for (const auto& [method, by_alpha] : rates) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [alpha, r] : by_alpha) {
      m[alpha_key(alpha)] = {{"rate", r.rate},   {"ci_lo", r.ci_lo},         {"ci_hi", r.ci_hi},
                             {"tests", r.tests}, {"rejections", r.rejections}};
    }
    j[method] = m;
  }
  j["skipped_count"] = skipped;
  return j.dump(2);
}

std::string test_result_json(const TestResult& result, std::uint64_t seed, std::size_t n, const std::string& arch,
                             const std::string& covariance, double tau) {
  nlohmann::json intervals = nlohmann::json::array();
  for (const RealInterval& iv : result.region.intervals) intervals.push_back({iv.lo, iv.hi});
  nlohmann::json j = {{"seed", seed},
                      {"n", n},
                      {"arch", arch},
                      {"covariance", covariance},
                      {"tau", tau},
                      {"z_obs", number_or_null(result.z_obs)},
                      {"p_selective", number_or_null(result.p_selective)},
                      {"p_naive", number_or_null(result.p_naive)},
                      {"p_bonferroni", number_or_null(result.p_bonferroni)},
                      {"n_intervals", result.region.intervals.size()},
                      {"n_model_evals", result.n_model_evals},
                      {"wall_time_s", result.wall_time},
                      {"status", "ok"},
                      {"intervals", intervals},
                      {"guaranteed", {result.region.guaranteed.lo, result.region.guaranteed.hi}}};
  return j.dump(2);
}

}  // namespace vitsi
