#include <memory>

#include <benchmark/benchmark.h>

#include "nngp/collapsed.hpp"
#include "nngp/data.hpp"
#include "nngp/marginal.hpp"
#include "nngp/neighbor.hpp"
#include "nngp/response.hpp"

namespace {

nngp::SpatialDataset bench_data(std::size_t n) {
  nngp::SimulationSpec spec;
  spec.n = n;
  spec.seed = 17;
  spec.dense_cap = 0;  // sequential NNGP draw keeps setup cheap at large n
  return nngp::simulate(spec);
}

const nngp::CovarianceParams kTheta{1.0, 6.0, 0.5, 1.0};

void BM_NeighborGraph(benchmark::State& state) {
  const auto d = bench_data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(nngp::build_neighbor_graph(d.coords, 15));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_NeighborGraph)->RangeMultiplier(2)->Range(2500, 40000)->Complexity()->Unit(benchmark::kMillisecond);

void BM_ResponsePrepare(benchmark::State& state) {
  const auto d = bench_data(static_cast<std::size_t>(state.range(0)));
  const auto prob = nngp::prepare_problem(d, {});
  nngp::ResponseBackend backend(prob.data, prob.graph);
  for (auto _ : state) {
    backend.prepare(kTheta);
    benchmark::DoNotOptimize(backend.log_det());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ResponsePrepare)->RangeMultiplier(2)->Range(2500, 40000)->Complexity()->Unit(benchmark::kMillisecond);

void collapsed_prepare(benchmark::State& state, nngp::OrderingMethod method) {
  const auto d = bench_data(static_cast<std::size_t>(state.range(0)));
  const auto prob = nngp::prepare_problem(d, {});
  auto structure = std::make_shared<const nngp::CollapsedStructure>(prob.graph, method);
  nngp::CollapsedBackend backend(prob.data, structure);
  for (auto _ : state) {
    backend.prepare(kTheta);
    benchmark::DoNotOptimize(backend.log_det());
  }
  state.counters["factor_nnz"] = static_cast<double>(structure->symbolic().nnz());
}

void BM_CollapsedPrepareAmd(benchmark::State& state) {
  collapsed_prepare(state, nngp::OrderingMethod::approximate_minimum_degree);
}
void BM_CollapsedPrepareNatural(benchmark::State& state) {
  collapsed_prepare(state, nngp::OrderingMethod::natural);
}
BENCHMARK(BM_CollapsedPrepareAmd)->Arg(2500)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CollapsedPrepareNatural)->Arg(2500)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
