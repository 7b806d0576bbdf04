#include <vector>

#include <benchmark/benchmark.h>

#include "rpmeas/integrate.hpp"
#include "rpmeas/parallel.hpp"

using namespace rpmeas;

namespace {

constexpr std::size_t kPaths = 512;

PeriodicSdeModel bench_model(int which) {
  return which == 0 ? build_ou(OuParams{}) : build_lorenz(LorenzParams::regime1());
}

void run(benchmark::State& state, bool parallel) {
  const auto model = bench_model(static_cast<int>(state.range(0)));
  const NoiseSpec spec{7, 1e-3, model.noise_dim, 0.0};
  const std::vector<double> x0(static_cast<std::size_t>(model.dim), 1.0);
  const auto init = InitialCondition::point(x0);
  const std::vector<double> checkpoints = {0.5, 1.0};
  if (parallel) set_worker_count(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    auto r = parallel ? ensemble_flow(model, 0.0, 1.0, init, kPaths, spec, {}, checkpoints)
                      : ensemble_flow_serial(model, 0.0, 1.0, init, kPaths, spec, {}, checkpoints);
    benchmark::DoNotOptimize(r.checkpoints.back().state.mean().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kPaths) * 1000);
  state.SetLabel(model.label);
}

void BM_ensemble_serial(benchmark::State& state) { run(state, false); }
void BM_ensemble_parallel(benchmark::State& state) { run(state, true); }

}  // namespace

// Args: model (0 = OU, 1 = Lorenz), worker count.
BENCHMARK(BM_ensemble_serial)->Args({0, 1})->Args({1, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ensemble_parallel)
    ->ArgsProduct({{0, 1}, {1, 2, 4}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

BENCHMARK_MAIN();
