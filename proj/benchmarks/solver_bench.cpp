#include <benchmark/benchmark.h>

#include "ssmpc/demo.hpp"
#include "ssmpc/dual_apg_solver.hpp"

namespace {

using namespace ssmpc;

ProblemInstance demo_problem(DemoKind kind, std::vector<int> branching) {
  const DemoSet demo = make_demo(kind, {.seed = 1, .steps = 24, .branching = std::move(branching)});
  return assemble_problem(demo.network, attach_forecast(demo.tree, demo.forecast.demand, demo.forecast.price),
                          demo.config.weights(demo.network.num_inputs()), demo.state.x, demo.state.u_prev,
                          demo.state.k);
}

const ProblemInstance& net10_problem() {
  static const ProblemInstance p = demo_problem(DemoKind::Net10, {10, 10});
  return p;
}

void BM_FactorStep(benchmark::State& state) {
  const ProblemInstance& p = net10_problem();
  for (auto _ : state) benchmark::DoNotOptimize(factor_step(p));
}
BENCHMARK(BM_FactorStep)->Unit(benchmark::kMillisecond);

void BM_DualGradient(benchmark::State& state) {
  const ProblemInstance& p = net10_problem();
  const FactorCache cache = factor_step(p);
  const Vector y = Vector::Constant(p.dual_dim(), 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(dual_gradient(cache, p, y, static_cast<int>(state.range(0))));
  state.counters["nodes"] = p.tree().num_nodes();
}
BENCHMARK(BM_DualGradient)->Arg(1)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_ProxConjugate(benchmark::State& state) {
  const ProblemInstance& p = net10_problem();
  const Vector w = Vector::LinSpaced(p.dual_dim(), -5.0, 5.0);
  for (auto _ : state) benchmark::DoNotOptimize(prox_g_conjugate(p, w, 0.5));
}
BENCHMARK(BM_ProxConjugate)->Unit(benchmark::kMicrosecond);

void BM_Solve(benchmark::State& state) {
  const ProblemInstance p = demo_problem(static_cast<DemoKind>(state.range(0)), {});
  SolverConfig cfg;
  cfg.tolerance = 5e-2;
  cfg.max_iterations = 100000;
  int iterations = 0;
  for (auto _ : state) iterations = solve(p, cfg).iterations;
  state.counters["iterations"] = iterations;
}
BENCHMARK(BM_Solve)
    ->Arg(static_cast<int>(DemoKind::Tank1))
    ->Arg(static_cast<int>(DemoKind::Net3))
    ->Arg(static_cast<int>(DemoKind::Net10))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
