#include <benchmark/benchmark.h>

#include <cmath>

#include "cl_lab/curvature.hpp"
#include "cl_lab/data.hpp"
#include "cl_lab/dln.hpp"

using namespace cl_lab;

namespace {

DlnParams init(int d, int L, Rng& rng) {
  DlnParams p;
  for (int i = 0; i < L; ++i) p.weights.push_back(0.5 * rng.gaussian_matrix(d, d) / std::sqrt(double(d)));
  return p;
}

struct Fixture {
  Task task;
  GramStats stats;
  DlnParams p, v;
  Fixture(int d, int L) {
    Rng rng(7);
    task = synth_teacher_task(d, 16 * d, 4, 0.0, rng);
    stats = gram_stats(task);
    p = init(d, L, rng);
    v = init(d, L, rng);
  }
};

void BM_Grad(benchmark::State& state) {
  const Fixture f(int(state.range(0)), int(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(grad(f.p, f.stats, 1e-3));
}
BENCHMARK(BM_Grad)->Args({32, 2})->Args({32, 6})->Args({64, 4});

void BM_Hvp(benchmark::State& state) {
  const Fixture f(int(state.range(0)), int(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(hvp(f.p, f.stats, f.v));
}
BENCHMARK(BM_Hvp)->Args({32, 2})->Args({32, 6})->Args({64, 4});

void BM_AlphaClosed(benchmark::State& state) {
  const Fixture f(int(state.range(0)), int(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(alpha_closed(f.p, f.task));
}
BENCHMARK(BM_AlphaClosed)->Args({32, 2})->Args({32, 6})->Unit(benchmark::kMillisecond);

void BM_TrainEpochs(benchmark::State& state) {
  const Fixture f(int(state.range(0)), int(state.range(1)));
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.record_diagnostics = false;
  for (auto _ : state) {
    Rng rng(1);
    benchmark::DoNotOptimize(train(f.p, f.task, cfg, rng));
  }
  state.SetItemsProcessed(state.iterations() * cfg.epochs);
}
BENCHMARK(BM_TrainEpochs)->Args({32, 4})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
