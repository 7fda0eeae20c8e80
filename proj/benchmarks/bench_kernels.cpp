#include <benchmark/benchmark.h>

#include "ebsaea/gp.hpp"
#include "ebsaea/metrics.hpp"

using namespace ebsaea;

namespace {

DeepKernelParams network(std::size_t d) {
  RngStream rng(1, 0);
  DeepKernelParams p;
  const std::vector<std::size_t> hidden{40, 40};
  p.mlp = MlpParams::glorot(d, hidden, rng);
  p.base = BaseKernelParams::uniform(d, 1.0, 1.8);
  return p;
}

Dataset sample(std::size_t n, std::size_t d) {
  RngStream rng(2, 0);
  Dataset data;
  data.bounds = unit_bounds(d);
  for (const auto& x : lhs_sample(n, data.bounds, rng)) {
    double y = 0.0;
    for (double v : x) y += (v - 0.5) * (v - 0.5);
    data.push_back(x, y);
  }
  return data;
}

void BM_KernelMatrix(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = network(10);
  const Dataset data = sample(n, 10);
  for (auto _ : state) benchmark::DoNotOptimize(kernel_matrix(p, data.xs, 1e-8));
}
BENCHMARK(BM_KernelMatrix)->Arg(20)->Arg(60)->Arg(150);

void BM_LikelihoodGradient(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = network(10);
  const Dataset data = sample(n, 10);
  const TaskIncrements zero = TaskIncrements::zeros(10);
  for (auto _ : state) benchmark::DoNotOptimize(neg_log_likelihood(p, zero, data));
}
BENCHMARK(BM_LikelihoodGradient)->Arg(20)->Arg(60);

void BM_FeatureLikelihood(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = network(10);
  const FeatureData fd = prepare_features(p.mlp, sample(n, 10));
  const TaskIncrements zero = TaskIncrements::zeros(10);
  for (auto _ : state) benchmark::DoNotOptimize(feature_likelihood(p.base, zero, fd));
}
BENCHMARK(BM_FeatureLikelihood)->Arg(10)->Arg(40);

void BM_Predict(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const GpState s = fit_gp(network(10), TaskIncrements::zeros(10), sample(n, 10));
  const std::vector<double> x(10, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(s.predict(x));
}
BENCHMARK(BM_Predict)->Arg(40)->Arg(90);

void BM_IgdPlus(benchmark::State& state) {
  RngStream rng(3, 0);
  const PointSet ref = pf_reference(Family::kDtlz2, 3, 5000, rng);
  PointSet arch(static_cast<std::size_t>(state.range(0)), Point(3));
  for (auto& a : arch)
    for (double& v : a) v = rng.uniform(0.0, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(igd_plus(ref, arch));
}
BENCHMARK(BM_IgdPlus)->Arg(40)->Arg(90);

}  // namespace

BENCHMARK_MAIN();
