#include <benchmark/benchmark.h>

#include "flowlab/nn.hpp"

using namespace flowlab;

namespace {
Mlp default_net() {
  Rng rng(Seed{3}, "bench");
  return Mlp::init(MlpArch{}, rng, false);
}
}  // namespace

static void BM_MlpForward(benchmark::State& state) {
  const Mlp net = default_net();
  Rng rng(Seed{4}, "bench");
  const Points x = rng.normal_matrix(2, state.range(0));
  const Vec t = rng.uniform_vector(state.range(0), 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward_batch(t, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(256)->Arg(1024);

static void BM_MlpForwardBackward(benchmark::State& state) {
  const Mlp net = default_net();
  Rng rng(Seed{5}, "bench");
  const Points x = rng.normal_matrix(2, state.range(0));
  const Vec t = rng.uniform_vector(state.range(0), 0.0, 1.0);
  const Mat feats = net.features_batch(t, x);
  const Mat cot = Mat::Ones(2, state.range(0));
  for (auto _ : state) {
    MlpTape tape;
    net.forward_features(feats, &tape);
    benchmark::DoNotOptimize(net.backward(tape, cot));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForwardBackward)->Arg(256);

static void BM_ValueDivGrad(benchmark::State& state) {
  const Mlp net = default_net();
  Vec x(2), c(2);
  x << 0.3, -0.2;
  c << 1.0, -1.0;
  for (auto _ : state) benchmark::DoNotOptimize(net.value_div_grad(0.4, x, c, 1.0));
}
BENCHMARK(BM_ValueDivGrad);
