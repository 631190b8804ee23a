#include <benchmark/benchmark.h>

#include "cgvar/objective.hpp"
#include "cgvar/reference.hpp"
#include "cgvar/tempering.hpp"

using namespace cgvar;

namespace {

// Batched gradient with ghost-norm normalization at the reference widths.
void BM_GradientBatched(benchmark::State& state) {
  Rng rng(1);
  const CgModel m(Architecture::double_well(static_cast<std::size_t>(state.range(1))), rng);
  const DoubleWell2D well;
  const NoiseBatch noise = NoiseBatch::draw(1, 2, static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_gradient(m, well, 1.0, noise));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GradientBatched)->Args({1000, 100})->Args({1000, 20})->Args({4000, 100})
    ->Unit(benchmark::kMillisecond);

// Materialized per-sample gradients (the scalar reference path).
void BM_GradientPerSample(benchmark::State& state) {
  Rng rng(1);
  const CgModel m(Architecture::double_well(static_cast<std::size_t>(state.range(1))), rng);
  const DoubleWell2D well;
  const NoiseBatch noise = NoiseBatch::draw(1, 2, static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(normalize_gradients(per_sample_gradients(m, well, 1.0, noise), 3.0));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GradientPerSample)->Args({1000, 100})->Args({1000, 20})->Unit(benchmark::kMillisecond);

void BM_Objective(benchmark::State& state) {
  Rng rng(1);
  const CgModel m(Architecture::double_well(), rng);
  const DoubleWell2D well;
  const NoiseBatch noise = NoiseBatch::draw(1, 2, 1000, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_objective(m, well, 1.0, noise));
  }
}
BENCHMARK(BM_Objective)->Unit(benchmark::kMillisecond);

void BM_RelativeKlIncrease(benchmark::State& state) {
  Rng rng(1);
  const CgModel m(Architecture::double_well(), rng);
  const DoubleWell2D well;
  for (auto _ : state) {
    benchmark::DoNotOptimize(relative_kl_increase(m, well, 0.5, 0.52, 5.0, 1000, rng));
  }
}
BENCHMARK(BM_RelativeKlIncrease)->Unit(benchmark::kMillisecond);

void BM_AdamStep(benchmark::State& state) {
  Rng rng(1);
  CgModel m(Architecture::double_well(), rng);
  AdamState adam(m.param_count());
  std::vector<double> g(m.param_count(), 1e-3);
  for (auto _ : state) {
    adam_step(adam, g, m.params().values());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.size()));
}
BENCHMARK(BM_AdamStep);

void BM_MalaDoubleWell(benchmark::State& state) {
  const DoubleWell2D well;
  MalaConfig c;
  c.steps = 100000;
  c.burn_in = 1000;
  c.initial = {-2.5, 0.0};
  Rng rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mala_chain(well, c, rng));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.steps));
}
BENCHMARK(BM_MalaDoubleWell)->Unit(benchmark::kMillisecond);

void BM_QuadratureDoubleWell(benchmark::State& state) {
  const DoubleWell2D well;
  const QuadratureGrid g = QuadratureGrid::double_well();
  for (auto _ : state) {
    benchmark::DoNotOptimize(grid_quadrature(well, 1.0, g, sign_of_first_coordinate()));
  }
}
BENCHMARK(BM_QuadratureDoubleWell)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
