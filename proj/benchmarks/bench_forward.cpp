#include <benchmark/benchmark.h>

#include <random>

#include "vitsi/attention_map.hpp"
#include "vitsi/selective.hpp"
#include "vitsi/vit.hpp"

namespace {

// Args: {arch index, image side}.
vitsi::ViTWeights weights_for(const benchmark::State& state) {
  const auto presets = vitsi::arch_presets();
  const auto& preset = presets[static_cast<std::size_t>(state.range(0))];
  return vitsi::random_init(vitsi::make_config(preset.name, static_cast<std::size_t>(state.range(1))), 7);
}

std::vector<double> noise(std::size_t n) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  std::vector<double> x(n);
  for (double& v : x) v = normal(rng);
  return x;
}

void BM_AttentionMapReal(benchmark::State& state) {
  const auto w = weights_for(state);
  const auto x = noise(w.config.pixels());
  for (auto _ : state) benchmark::DoNotOptimize(vitsi::attention_map<double>(w, x));
  state.SetLabel(std::to_string(w.config.num_tokens()) + " tokens");
}

void BM_AttentionMapDual(benchmark::State& state) {
  const auto w = weights_for(state);
  const auto xd = noise(w.config.pixels());
  std::vector<vitsi::Dual> x(xd.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = {xd[i], 1.0};
  for (auto _ : state) benchmark::DoNotOptimize(vitsi::attention_map<vitsi::Dual>(w, x));
}

void BM_ConstraintEvaluation(benchmark::State& state) {
  const auto w = weights_for(state);
  const auto setup = vitsi::make_setup(w, noise(w.config.pixels()), vitsi::Covariance::identity(w.config.pixels()));
  if (!setup.region.proper()) {
    state.SkipWithError("degenerate region for benchmark image");
    return;
  }
  const auto line = vitsi::build_line(setup);
  const vitsi::AttentionObjective objective(w, line, setup.region, vitsi::kDefaultTau);
  std::vector<vitsi::Dual> f;
  double z = line.z_obs;
  for (auto _ : state) {
    objective.values_and_derivatives(z, f);
    benchmark::DoNotOptimize(f.data());
    z += 1e-3;
  }
}

// arch: 0 small, 1 base, 2 large, 3 huge.
void Sizes(benchmark::internal::Benchmark* b) {
  for (int side : {8, 16}) b->Args({0, side});
  for (int side : {8, 16, 32}) b->Args({1, side});
  b->Args({2, 16});
  b->Args({3, 16});
}

}  // namespace

BENCHMARK(BM_AttentionMapReal)->Apply(Sizes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttentionMapDual)->Apply(Sizes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConstraintEvaluation)->Args({1, 16})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
