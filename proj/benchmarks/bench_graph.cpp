#include <benchmark/benchmark.h>

#include "modcausal/hgraph.hpp"
#include "modcausal/scm.hpp"

using namespace modcausal;

static void bm_c_components(benchmark::State& state) {
  DiscreteScm scm = random_scm((int)state.range(0), 7);
  for (auto _ : state) benchmark::DoNotOptimize(c_components(scm.graph()));
}
BENCHMARK(bm_c_components)->Arg(15)->Arg(50);

static void bm_construct_hgraph(benchmark::State& state) {
  DiscreteScm scm = random_scm((int)state.range(0), 7);
  for (auto _ : state) benchmark::DoNotOptimize(construct_hgraph(scm.graph()));
}
BENCHMARK(bm_construct_hgraph)->Arg(15)->Arg(25)->Arg(50)->Unit(benchmark::kMillisecond);

static void bm_hgraph_interventional(benchmark::State& state) {
  DiscreteScm scm = random_scm((int)state.range(0), 7);
  HGraph base = construct_hgraph(scm.graph());
  VariableSet target{scm.graph().name_of(0)};
  for (auto _ : state)
    benchmark::DoNotOptimize(construct_hgraph_interventional(scm.graph(), target, base));
}
BENCHMARK(bm_hgraph_interventional)->Arg(15)->Arg(25)->Unit(benchmark::kMillisecond);

static void bm_m_separated(benchmark::State& state) {
  DiscreteScm scm = random_scm((int)state.range(0), 7);
  const Admg& g = scm.graph();
  VariableSet a{g.name_of(0)}, b{g.name_of((int)g.size() - 1)}, c{g.name_of(1)};
  for (auto _ : state) benchmark::DoNotOptimize(m_separated(g, a, b, c));
}
BENCHMARK(bm_m_separated)->Arg(15)->Arg(50);

static void bm_make_training_plan(benchmark::State& state) {
  DiscreteScm scm = random_scm((int)state.range(0), 7);
  std::vector<VariableSet> labels = {VariableSet{}};
  for (auto _ : state) benchmark::DoNotOptimize(make_training_plan(scm.graph(), labels));
}
BENCHMARK(bm_make_training_plan)->Arg(10)->Arg(15)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
