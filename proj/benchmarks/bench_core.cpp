#include <benchmark/benchmark.h>

#include <vector>

#include "spgrpo/bias_audit.hpp"
#include "spgrpo/cerm.hpp"
#include "spgrpo/flow_policy.hpp"
#include "spgrpo/grpo.hpp"

using namespace spgrpo;

namespace {

flow::FlowPolicy default_policy(std::size_t width) {
  numerics::RandomSource rng(1);
  const std::vector<std::size_t> hidden{width, width};
  return flow::FlowPolicy::create(flow::FlowDims{}, hidden, rng);
}

void BM_MlpForward(benchmark::State& state) {
  const auto policy = default_policy(static_cast<std::size_t>(state.range(0)));
  const std::vector<double> input(policy.dims().net_input_dim(), 0.3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(numerics::mlp_forward(policy.net(), input));
  }
}
BENCHMARK(BM_MlpForward)->Arg(64)->Arg(128);

void BM_SdeSample(benchmark::State& state) {
  const auto policy = default_policy(128);
  flow::SdeConfig cfg;
  cfg.num_steps = static_cast<std::size_t>(state.range(0));
  numerics::RandomSource rng(2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(flow::sde_sample(policy, 3, cfg, rng));
  }
}
BENCHMARK(BM_SdeSample)->Arg(16)->Arg(32);

void BM_TrainerStep(benchmark::State& state) {
  grpo::TrainConfig cfg;
  cfg.group_size = static_cast<std::size_t>(state.range(0));
  cfg.num_steps = 1000000;
  grpo::Trainer trainer(default_policy(128), cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(trainer.step());
  }
}
BENCHMARK(BM_TrainerStep)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_CermStep(benchmark::State& state) {
  const std::size_t g = static_cast<std::size_t>(state.range(0));
  numerics::RandomSource rng(3);
  std::vector<std::vector<double>> rows(g, std::vector<double>(3));
  for (auto& row : rows) {
    for (double& v : row) v = rng.uniform();
  }
  const auto matrix = rewards::RewardMatrix::from_rows(rows);
  cerm::CermConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cerm::cerm_step(matrix, cfg));
  }
}
BENCHMARK(BM_CermStep)->Arg(16)->Arg(256);

void BM_KMeans(benchmark::State& state) {
  numerics::RandomSource rng(4);
  std::vector<std::vector<double>> points(static_cast<std::size_t>(state.range(0)));
  for (auto& p : points) p = numerics::gaussian(rng, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(audit::kmeans(points, 15, 7));
  }
}
BENCHMARK(BM_KMeans)->Arg(400)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
