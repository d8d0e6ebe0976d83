#include <benchmark/benchmark.h>

#include "valley/nn.hpp"

namespace {

using namespace valley;

void bm_train_step(benchmark::State& state) {
  const nn::Mlp mlp(nn::Architecture::mlp({2, 16, 16, 2}, true));
  nn::DatasetConfig dcfg;
  dcfg.train_size = static_cast<std::size_t>(state.range(0));
  dcfg.heldout_size = 16;
  const auto data = nn::generate_dataset(dcfg);
  auto params = mlp.init_params(3);
  auto stats = mlp.init_stats();
  ParamVector grad;
  for (auto _ : state) {
    const double loss =
        mlp.train_loss_grad(params, data.train_x, data.train_y, grad, &stats, 0.1);
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_train_step)->Arg(64)->Arg(512);

void bm_eval(benchmark::State& state) {
  const nn::Mlp mlp(nn::Architecture::mlp({2, 16, 16, 2}, true));
  nn::DatasetConfig dcfg;
  dcfg.train_size = 64;
  dcfg.heldout_size = static_cast<std::size_t>(state.range(0));
  const auto data = nn::generate_dataset(dcfg);
  const auto params = mlp.init_params(3);
  const auto stats = mlp.recompute_stats(params, data.train_x);
  for (auto _ : state) {
    const auto m = mlp.evaluate(params, stats, data.heldout_x, data.heldout_y);
    benchmark::DoNotOptimize(m.loss);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_eval)->Arg(50000);

}  // namespace
