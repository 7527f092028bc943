#include <benchmark/benchmark.h>

#include "flowlab/linalg.hpp"
#include "flowlab/transport.hpp"

using namespace flowlab;

static void BM_Hungarian(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(Seed{1}, "bench");
  const Points x = rng.normal_matrix(2, n), y = rng.normal_matrix(2, n);
  const Mat c = squared_cost_matrix(x, y);
  for (auto _ : state) benchmark::DoNotOptimize(hungarian(c));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Hungarian)->RangeMultiplier(2)->Range(32, 512)->Complexity(benchmark::oNCubed);

static void BM_TransportationSimplex(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(Seed{2}, "bench");
  const Points x = rng.normal_matrix(2, n), y = rng.normal_matrix(2, n + 7);
  const Vec a = rng.uniform_vector(n, 0.5, 1.5), b = rng.uniform_vector(n + 7, 0.5, 1.5);
  const Mat c = squared_cost_matrix(x, y);
  for (auto _ : state) benchmark::DoNotOptimize(solve_transportation(a / a.sum(), b / b.sum(), c));
}
BENCHMARK(BM_TransportationSimplex)->Arg(16)->Arg(64)->Arg(128);
