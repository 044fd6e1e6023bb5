#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "vitsi/errors.hpp"
#include "vitsi/experiments.hpp"

namespace vitsi {
namespace {

TEST(Sampler, IdentityMoments) {
  const Covariance cov = Covariance::identity(256);
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    for (double x : gen_null(cov, derive_seed(99, s))) {
      sum += x;
      sq += x * x;
      ++count;
    }
  }
  const double mean = sum / count;
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(sq / count - mean * mean, 1.0, 0.05);
}

TEST(Sampler, PowerCorrelationLagOne) {
  const Covariance cov = Covariance::power_correlation(256, 0.5);
  double cross = 0.0, sq = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto x = gen_null(cov, derive_seed(7, s));
    for (std::size_t i = 0; i + 1 < x.size(); ++i) cross += x[i] * x[i + 1];
    for (double v : x) sq += v * v;
  }
  EXPECT_NEAR(cross / sq, 0.5, 0.03);
}

TEST(Sampler, SeedDeterminism) {
  const Covariance cov = Covariance::identity(64);
  EXPECT_EQ(gen_null(cov, 3), gen_null(cov, 3));
  EXPECT_NE(gen_null(cov, 3), gen_null(cov, 4));
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}

TEST(Sampler, SquareRegion) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto r = random_square_region(256, s);
    ASSERT_EQ(r.size(), 16u);
    const std::size_t r0 = r.front() / 16, c0 = r.front() % 16;
    for (std::size_t k = 0; k < 16; ++k) EXPECT_EQ(r[k], (r0 + k / 4) * 16 + c0 + k % 4);
  }
  EXPECT_EQ(random_square_region(4, 1).size(), 1u);
}

TEST(Sampler, SignalShiftsRegionMean) {
  const Covariance cov = Covariance::identity(256);
  EXPECT_EQ(gen_signal({256, 0.0, cov}, 11).image, gen_null(cov, 11));
  double diff = 0.0;
  const int reps = 200;
  for (int s = 0; s < reps; ++s) {
    const SyntheticImage img = gen_signal({256, 3.0, cov}, derive_seed(5, s));
    const SyntheticImage base = gen_signal({256, 0.0, cov}, derive_seed(5, s));
    EXPECT_EQ(img.signal_region, base.signal_region);
    for (std::size_t i = 0; i < 256; ++i) {
      const bool in = std::binary_search(img.signal_region.begin(), img.signal_region.end(), i);
      EXPECT_NEAR(img.image[i] - base.image[i], in ? 3.0 : 0.0, 1e-12);
    }
    double in_sum = 0.0, out_sum = 0.0;
    for (std::size_t i = 0; i < 256; ++i)
      (std::binary_search(img.signal_region.begin(), img.signal_region.end(), i) ? in_sum : out_sum) += img.image[i];
    diff += in_sum / 16.0 - out_sum / 240.0;
  }
  EXPECT_NEAR(diff / reps, 3.0, 0.1);
}

TEST(ParallelFor, CoversEveryIndexOnceAndRethrows) {
  for (std::size_t workers : {1u, 3u, 8u}) {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, workers, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
    EXPECT_THROW(parallel_for(20, workers,
                              [](std::size_t i) {
                                if (i == 7) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
  }
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.arch = "small";
  c.n = 64;
  c.patch_size = 2;
  c.seed = 2024;
  return c;
}

TEST(Experiments, TrialsAreDeterministicAcrossWorkerCounts) {
  ExperimentConfig c = small_config();
  const ViTWeights w = random_init(make_config("small", 8, 2), 4);
  c.workers = 1;
  const TrialBatch one = run_type1(w, c, 6);
  c.workers = 3;
  const TrialBatch three = run_type1(w, c, 6);
  ASSERT_EQ(one.records.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(one.records[i].seed, three.records[i].seed);
    EXPECT_EQ(one.records[i].status, three.records[i].status);
    if (one.records[i].ok()) {
      EXPECT_EQ(one.records[i].p_selective, three.records[i].p_selective);
      EXPECT_EQ(one.records[i].n_model_evals, three.records[i].n_model_evals);
    }
  }
  EXPECT_EQ(one.fingerprint, c.fingerprint());
}

TEST(Experiments, ZeroWeightsAreSkipped) {
  const ExperimentConfig c = small_config();
  const TrialBatch b = run_type1(zero_weights(make_config("small", 8, 2)), c, 3);
  EXPECT_EQ(skipped_count(b), 3u);
  const MethodRates rates = summarize(b);
  EXPECT_EQ(rates.at("adaptive").at(0.05).tests, 0u);
}

TEST(Experiments, PowerReusesSeedsAcrossDeltas) {
  const ExperimentConfig c = small_config();
  const ViTWeights w = random_init(make_config("small", 8, 2), 4);
  const TrialBatch b = run_power(w, c, {1.0, 4.0}, 2);
  ASSERT_EQ(b.records.size(), 4u);
  EXPECT_EQ(b.records[0].seed, b.records[2].seed);
  EXPECT_EQ(b.records[0].delta, 1.0);
  EXPECT_EQ(b.records[3].delta, 4.0);
}

TEST(Experiments, TimingRecordsEveryMode) {
  const ExperimentConfig c = small_config();
  const ViTWeights w = random_init(make_config("small", 8, 2), 4);
  const TrialBatch b = run_timing(w, c, {GridMode::kAdaptive, GridMode::kCombination}, 2);
  const auto summary = summarize_timing(b);
  ASSERT_EQ(summary.size(), 2u);
  for (const auto& s : summary) EXPECT_GT(s.mean_evals, 0.0);
}

TEST(Rates, WilsonInterval) {
  const RateEstimate r = rejection_rate(5, 100);
  EXPECT_DOUBLE_EQ(r.rate, 0.05);
  EXPECT_NEAR(r.ci_lo, 0.02154367915436796, 1e-14);
  EXPECT_NEAR(r.ci_hi, 0.11175046923191913, 1e-14);
  const RateEstimate zero = rejection_rate(0, 50);
  EXPECT_EQ(zero.ci_lo, 0.0);
  EXPECT_NEAR(zero.ci_hi, 0.07134759913335872, 1e-14);
  const RateEstimate big = rejection_rate(50, 1000);
  EXPECT_NEAR(big.ci_lo, 0.03813026239274882, 1e-14);
  EXPECT_NEAR(big.ci_hi, 0.06531382024425081, 1e-14);
}

TEST(Rates, BinomialUpperTail) {
  // Reference values from an independent statistics library.
  EXPECT_NEAR(binomial_upper_tail(10, 100, 0.05) / 0.02818829416341614, 1.0, 1e-10);
  EXPECT_NEAR(binomial_upper_tail(20, 1000, 0.01) / 0.0032883597877274573, 1.0, 1e-10);
  EXPECT_NEAR(binomial_upper_tail(71, 1000, 0.05) / 0.0023303005476086147, 1.0, 1e-10);
  EXPECT_EQ(binomial_upper_tail(0, 10, 0.3), 1.0);
}

TEST(Uniformity, KolmogorovDistribution) {
  EXPECT_NEAR(kolmogorov_pvalue(0.05, 1000), 0.012958845703741699, 1e-12);
  EXPECT_NEAR(kolmogorov_pvalue(0.02, 1000), 0.8149480335331604, 1e-12);
  EXPECT_NEAR(kolmogorov_pvalue(0.1, 100), 0.25622118507010405, 1e-12);
}

TEST(Uniformity, OracleInputs) {
  std::vector<double> uniform(1000);
  for (std::size_t i = 0; i < uniform.size(); ++i) uniform[i] = (i + 0.5) / uniform.size();
  const UniformityReport good = uniformity_check(uniform, {0.01, 0.05, 0.1});
  EXPECT_GT(good.ks_pvalue, 0.9);
  EXPECT_NEAR(good.ecdf.at(0.05).rate, 0.05, 1e-12);

  const UniformityReport bad = uniformity_check(std::vector<double>(1000, 0.5), {0.05});
  EXPECT_NEAR(bad.ks_distance, 0.5, 1e-12);
  EXPECT_LT(bad.ks_pvalue, 1e-10);
  EXPECT_THROW(uniformity_check(std::vector<double>(99, 0.5), {0.05}), ConfigError);
}

TEST(Parsing, MethodsAndModes) {
  EXPECT_EQ(parse_method("permutation"), Method::kPermutation);
  EXPECT_EQ(parse_covariance_mode("estimated"), CovarianceMode::kEstimated);
  EXPECT_THROW(parse_method("oracle"), ConfigError);
  EXPECT_THROW(parse_covariance_mode("diag"), ConfigError);
  ExperimentConfig a = small_config(), b = small_config();
  b.seed = 1;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}

// ---- report formats ------------------------------------------------------------

TEST(Report, CsvHeaderAndRows) {
  TrialBatch batch{small_config(), "", {}};
  TrialRecord ok;
  ok.seed = 42;
  ok.covariance = "identity";
  ok.z_obs = 1.5;
  ok.p_selective = 0.25;
  batch.records.push_back(ok);
  TrialRecord skipped;
  skipped.status = "skipped";
  batch.records.push_back(skipped);
  std::ostringstream out;
  write_trials_csv(out, batch);
  std::istringstream in(out.str());
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  EXPECT_EQ(header,
            "seed,n,arch,covariance,tau,z_obs,p_selective,p_naive,p_bonferroni,n_intervals,n_model_evals,"
            "wall_time_s,status,mode,delta,p_permutation");
  EXPECT_EQ(row1.substr(0, 30), "42,64,small,identity,0.6,1.5,0");
  EXPECT_NE(row2.find(",skipped,"), std::string::npos);
}

TEST(Report, SummaryJsonShape) {
  const ExperimentConfig c = small_config();
  MethodRates rates;
  rates["adaptive"][0.05] = rejection_rate(3, 60);
  rates["naive"][0.05] = rejection_rate(30, 60);
  const auto j = nlohmann::json::parse(summary_json(c, rates, 2));
  EXPECT_EQ(j.at("skipped_count"), 2);
  EXPECT_EQ(j.at("config").at("arch"), "small");
  EXPECT_EQ(j.at("config").at("fingerprint"), c.fingerprint());
  for (const char* key : {"rate", "ci_lo", "ci_hi"}) EXPECT_TRUE(j.at("adaptive").at("0.05").contains(key));
  EXPECT_DOUBLE_EQ(j.at("naive").at("0.05").at("rate").get<double>(), 0.5);
}

TEST(Report, TestResultJson) {
  TestResult r;
  r.z_obs = 2.0;
  r.p_selective = 0.1;
  r.p_naive = naive_p(2.0);
  r.p_bonferroni = 1.0;
  r.region.intervals = {{-3.0, -1.0}, {1.5, 2.5}};
  r.region.guaranteed = {1.9, 2.1};
  const auto j = nlohmann::json::parse(test_result_json(r, 7, 64, "small", "identity", 0.6));
  for (const char* key : {"seed", "n", "arch", "covariance", "tau", "z_obs", "p_selective", "p_naive", "p_bonferroni",
                          "n_intervals", "n_model_evals", "wall_time_s", "status"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j.at("n_intervals"), 2);
  EXPECT_EQ(j.at("status"), "ok");
}

}  // namespace
}  // namespace vitsi
