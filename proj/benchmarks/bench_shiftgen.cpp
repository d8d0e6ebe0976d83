#include <benchmark/benchmark.h>

#include "valley/shiftgen.hpp"

namespace {

void bm_enumerate(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto instance = valley::shift::random_theorem_one_instance(11, k, 0.0);
  for (auto _ : state) {
    auto gap = valley::shift::enumerate_expected_losses(instance.model, instance.bias);
    benchmark::DoNotOptimize(gap.gap);
  }
  state.SetItemsProcessed(state.iterations() * (1u << k));
}
BENCHMARK(bm_enumerate)->Arg(8)->Arg(12)->Arg(16);

void bm_monte_carlo(benchmark::State& state) {
  const auto instance = valley::shift::random_theorem_one_instance(11, 24, 0.01);
  for (auto _ : state) {
    auto gap = valley::shift::monte_carlo_expected_losses(instance.model, instance.bias,
                                                          static_cast<std::size_t>(state.range(0)),
                                                          17);
    benchmark::DoNotOptimize(gap.gap);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_monte_carlo)->Arg(1 << 14);

}  // namespace
