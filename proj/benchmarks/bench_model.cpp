#include <benchmark/benchmark.h>

#include "icefuse/bayes/variational.hpp"
#include "icefuse/common/rng.hpp"
#include "icefuse/model/parameters.hpp"
#include "icefuse/model/transformer.hpp"
#include "icefuse/numkernel/ops.hpp"

using namespace icefuse;

namespace {

nk::Tensor input(const model::ModelConfig& cfg, std::size_t batch) {
  nk::Tensor x({batch, cfg.channels, cfg.chip, cfg.chip});
  Stream s(3);
  for (double& v : x.data()) v = s.uniform();
  return x;
}

void BM_ForwardValue(benchmark::State& state) {
  model::ModelConfig cfg;
  const auto params = model::init_deterministic(cfg, 0);
  const auto x = input(cfg, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(model::predict(params, x, cfg));
}
BENCHMARK(BM_ForwardValue)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  model::ModelConfig cfg;
  const auto params = model::init_deterministic(cfg, 0);
  const auto x = input(cfg, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    nk::Graph g;
    const auto w = model::bind_parameters(g, params, true);
    g.backward(nk::mean(model::forward(g.constant(x), w, cfg)));
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_VariationalStep(benchmark::State& state) {
  model::ModelConfig cfg;
  const auto params = model::init_variational(cfg, 0);
  const auto x = input(cfg, 4);
  std::uint64_t step = 0;
  for (auto _ : state) {
    nk::Graph g;
    const auto sample = bayes::bind_posterior_sample(g, params, step++, true);
    g.backward(nk::add(nk::mean(model::forward(g.constant(x), sample.weights, cfg)), sample.kl));
  }
}
BENCHMARK(BM_VariationalStep)->Unit(benchmark::kMillisecond);

}  // namespace
