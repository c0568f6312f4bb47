#include <benchmark/benchmark.h>

#include "icefuse/common/rng.hpp"
#include "icefuse/fusion/fuse.hpp"
#include "icefuse/numkernel/ops.hpp"

using namespace icefuse;

namespace {

nk::Tensor filled(nk::Shape shape, std::uint64_t seed) {
  nk::Tensor t(std::move(shape));
  Stream s(seed);
  for (double& v : t.data()) v = s.normal();
  return t;
}

void BM_MatmulKernel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled({n, n}, 1);
  const auto b = filled({n, n}, 2);
  nk::Tensor c({n, n});
  for (auto _ : state) {
    nk::kernels::matmul_into(a.data().data(), b.data().data(), c.data().data(), n, n, n, false);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_MatmulKernel)->Arg(64)->Arg(128)->Arg(256);

void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled({n, n}, 1);
  const auto b = filled({n, n}, 2);
  for (auto _ : state) {
    nk::Graph g;
    auto x = g.leaf(a, true);
    auto y = g.leaf(b, true);
    g.backward(nk::sum(nk::matmul(x, y)));
    benchmark::DoNotOptimize(g.grad(x));
    benchmark::DoNotOptimize(g.grad(y));
  }
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(64)->Arg(128);

void BM_Fuse(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  fusion::FusionStack stack;
  for (const auto& id : fusion::default_order()) {
    grid::Grid sic(n, n, 50.0), sigma(n, n, 3.0);
    for (std::size_t i = 0; i < sic.size(); i += 7) sic.set_nodata(i), sigma.set_nodata(i);
    stack.push_back({id, sic, sigma});
  }
  for (auto _ : state) benchmark::DoNotOptimize(fusion::fuse(stack));
}
BENCHMARK(BM_Fuse)->Arg(512);

}  // namespace
