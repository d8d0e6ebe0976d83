#include <benchmark/benchmark.h>

#include "valley/sgd_sim.hpp"

namespace {

void bm_run_sgd(benchmark::State& state) {
  const valley::PiecewiseValley1D model = valley::default_asymmetric_valley();
  valley::sim::SGDConfig cfg;
  cfg.eta = 0.1;
  cfg.nu = 0.05;
  cfg.steps = state.range(0);
  cfg.w_init = 0.05;
  cfg.seed = 7;
  for (auto _ : state) {
    auto traj = valley::sim::run_sgd(valley::Loss1D(model), cfg);
    benchmark::DoNotOptimize(traj.positions.back());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_run_sgd)->Arg(1 << 12)->Arg(1 << 16);

void bm_segment_rounds(benchmark::State& state) {
  const valley::PiecewiseValley1D model = valley::default_asymmetric_valley();
  valley::sim::SGDConfig cfg;
  cfg.eta = 0.1;
  cfg.nu = 0.05;
  cfg.steps = state.range(0);
  cfg.w_init = 0.05;
  cfg.seed = 7;
  const auto traj = valley::sim::run_sgd(valley::Loss1D(model), cfg);
  for (auto _ : state) {
    auto rounds = valley::sim::segment_rounds(traj);
    benchmark::DoNotOptimize(rounds.size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_segment_rounds)->Arg(1 << 16);

}  // namespace
