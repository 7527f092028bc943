#include <benchmark/benchmark.h>

#include "flowlab/datasets.hpp"
#include "flowlab/odeint.hpp"

using namespace flowlab;

static void BM_Rk4AnalyticGmm(benchmark::State& state) {
  const VelocityField field(GaussianLatentField{gmm8()});
  SolverSpec spec;
  spec.steps = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sample_flow(field, 2, 64, spec, Seed{1}));
}
BENCHMARK(BM_Rk4AnalyticGmm)->Arg(20)->Arg(100);

static void BM_Rk4Neural(benchmark::State& state) {
  Rng rng(Seed{2}, "bench");
  auto net = std::make_shared<const Mlp>(Mlp::init(MlpArch{}, rng, false));
  const VelocityField field(NeuralField{net, Vec()});
  SolverSpec spec;
  for (auto _ : state) benchmark::DoNotOptimize(sample_flow(field, 2, state.range(0), spec, Seed{3}));
}
BENCHMARK(BM_Rk4Neural)->Arg(64)->Arg(512);
BENCHMARK_MAIN();
