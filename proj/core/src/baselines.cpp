#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "vitsi/errors.hpp"
#include "vitsi/selective.hpp"

namespace vitsi {

PermutationResult permutation_p(const TestSetup& setup, const ViTWeights& weights, double tau,
                                std::size_t permutations, const PermutationSource& draw) {
  if (permutations == 0) throw ConfigError("permutation test needs B >= 1");
  const std::size_t n = setup.image.size();
  const double z_obs = std::abs(test_statistic(setup));
  const std::size_t max_redraws = 100 * permutations + 100;

  PermutationResult out;
  std::size_t exceed = 0;
  std::vector<double> xb(n), scattered(n);
  for (std::size_t b = 0; b < permutations; ++b) {
    for (;;) {
      const std::vector<std::size_t> perm = draw();
      if (perm.size() != n) throw ConfigError("permutation has the wrong length");
      for (std::size_t i = 0; i < n; ++i) xb[i] = setup.image[perm[i]];
      const AttentionRegion region = threshold_region(attention_map<double>(weights, xb), tau);
      if (region.proper()) {
        const std::vector<double> eta = eta_vector(region, n);
        // Pixel i of the permuted image has noise covariance Σ(perm[i], perm[j]).
        for (std::size_t i = 0; i < n; ++i) scattered[perm[i]] = eta[i];
        const double var = setup.covariance.quadratic(scattered);
        if (!(var > 0.0)) throw CovarianceError("etaᵀ Σ eta is not positive");
        double proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) proj += eta[i] * xb[i];
        if (std::abs(proj / std::sqrt(var)) > z_obs) ++exceed;
        break;
      }
      if (++out.redraws > max_redraws) {
        throw DegenerateRegionError("permuted images keep producing degenerate attention regions");
      }
    }
  }
  out.p = static_cast<double>(exceed) / static_cast<double>(permutations);
  return out;
}

PermutationResult permutation_p(const TestSetup& setup, const ViTWeights& weights, double tau,
                                std::size_t permutations, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> perm(setup.image.size());
  PermutationSource draw = [&] {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
  };
  return permutation_p(setup, weights, tau, permutations, draw);
}

}  // namespace vitsi
