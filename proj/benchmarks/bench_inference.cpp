#include <benchmark/benchmark.h>

#include "modcausal/dcm.hpp"
#include "modcausal/fixtures.hpp"
#include "modcausal/trainer.hpp"

using namespace modcausal;

static void bm_scm_exact_joint(benchmark::State& state) {
  DiscreteScm scm = random_scm((int)state.range(0), 13);
  for (auto _ : state) benchmark::DoNotOptimize(scm_exact_joint(scm));
}
BENCHMARK(bm_scm_exact_joint)->Arg(5)->Arg(8)->Unit(benchmark::kMicrosecond);

static void bm_dcm_exact_distribution(benchmark::State& state) {
  DiscreteScm scm = fixtures::frontdoor();
  Dcm dcm = dcm_init(scm.graph(), scm.cards(), {}, 3);
  VariableSet all(scm.graph().nodes());
  for (auto _ : state) benchmark::DoNotOptimize(dcm_exact_distribution(dcm, all));
}
BENCHMARK(bm_dcm_exact_distribution)->Unit(benchmark::kMicrosecond);

static void bm_scm_sample_10k(benchmark::State& state) {
  DiscreteScm scm = fixtures::frontdoor();
  for (auto _ : state) benchmark::DoNotOptimize(scm_sample(scm, 10000, {}, 5));
}
BENCHMARK(bm_scm_sample_10k)->Unit(benchmark::kMillisecond);

static void bm_fit_stage_step(benchmark::State& state) {
  DiscreteScm scm = fixtures::frontdoor();
  const Admg& g = scm.graph();
  TrainingPlan plan = make_training_plan(g, {VariableSet{}});
  auto data = exact_data_for(scm, {InterventionSpec{}});
  Dcm dcm = dcm_init(g, scm.cards(), {}, 3);
  FitConfig cfg;
  cfg.mode = FitConfig::Mode::ExactTable;
  cfg.max_steps = 1;
  cfg.tolerance = 0;
  for (auto _ : state) benchmark::DoNotOptimize(fit_stage(dcm, plan.stages[1], data, cfg));
}
BENCHMARK(bm_fit_stage_step)->Unit(benchmark::kMicrosecond);

static void bm_exact_fit_frontdoor(benchmark::State& state) {
  DiscreteScm scm = fixtures::frontdoor();
  const Admg& g = scm.graph();
  TrainingPlan plan = make_training_plan(g, {VariableSet{}});
  auto data = exact_data_for(scm, {InterventionSpec{}});
  Dcm dcm = dcm_init(g, scm.cards(), {}, 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(modular_exact_fit(dcm, plan, data, 1e-6));
}
BENCHMARK(bm_exact_fit_frontdoor)->Unit(benchmark::kMillisecond);
