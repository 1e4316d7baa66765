#include <benchmark/benchmark.h>

#include <random>

#include "engage/features.hpp"
#include "engage/forest.hpp"
#include "engage/model.hpp"
#include "engage/ordinal.hpp"
#include "engage/synth.hpp"

using namespace engage;

namespace {

models::Matrix random_sequence(int rows, int cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  models::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
  return m;
}

// Full-size frame model: 270 x T input, default TCN.
void BM_TcnForward(benchmark::State& state) {
  models::ModelConfig cfg;
  models::Model model(cfg);
  const auto x = random_sequence(cfg.input_width(), static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TcnForward)->Arg(300)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_TcnForwardBackward(benchmark::State& state) {
  models::ModelConfig cfg;
  models::Model model(cfg);
  model.set_training(true);
  const auto x = random_sequence(cfg.input_width(), static_cast<int>(state.range(0)), 2);
  models::Rng rng(3);
  const models::Vector d = models::Vector::Ones(cfg.output_size());
  for (auto _ : state) {
    models::Trace trace;
    model.forward(x, trace, &rng);
    model.backward(trace, d);
  }
}
BENCHMARK(BM_TcnForwardBackward)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_LstmForward(benchmark::State& state) {
  models::ModelConfig cfg;
  cfg.backbone = models::Backbone::kLstm;
  models::Model model(cfg);
  const auto x = random_sequence(cfg.input_width(), static_cast<int>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
}
BENCHMARK(BM_LstmForward)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_Recombine(benchmark::State& state) {
  const std::vector<double> e{0.9, 0.6, 0.2};
  for (auto _ : state) benchmark::DoNotOptimize(ordinal::recombine(e));
}
BENCHMARK(BM_Recombine);

void BM_ClipSequence(benchmark::State& state) {
  synth::SynthConfig cfg;
  cfg.frames_per_video = static_cast<int>(state.range(0));
  const auto series = synth::generate_video(cfg, 2, 0);
  const features::ClipParams params;
  for (auto _ : state) benchmark::DoNotOptimize(features::clip_sequence(series, params));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ClipSequence)->Arg(300)->Arg(9000)->Unit(benchmark::kMicrosecond);

void BM_ForestImportance(benchmark::State& state) {
  const int n = 1000, f = features::kClipFeatureCount;
  const auto x = random_sequence(n, f, 5);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = (x(i, 0) > 0 ? 2 : 0) + (x(i, 1) > 0 ? 1 : 0);
  std::vector<std::string> names;
  for (int j = 0; j < f; ++j) names.push_back("f" + std::to_string(j));
  eval::ForestConfig cfg;
  cfg.trees = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(eval::rf_importance(x, y, names, cfg));
}
BENCHMARK(BM_ForestImportance)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
