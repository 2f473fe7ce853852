// Serial reference vs OpenMP kernels.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "chatter/model.hpp"
#include "chatter/spectral.hpp"
#include "chatter/synth.hpp"

namespace {

using namespace chatter;

TimeSignal noise_signal(double seconds) {
  TimeSignal s{std::vector<double>(static_cast<std::size_t>(seconds * 22050.0)), 22050.0};
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& x : s.samples) x = g(rng);
  return s;
}

std::vector<Sample> random_samples(std::size_t n) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-20.0, 0.0);
  std::vector<Sample> out(n);
  for (auto& s : out) {
    s.frame.lines.resize(1024);
    for (auto& v : s.frame.lines) v = u(rng);
  }
  return out;
}

void BM_ExtractSerial(benchmark::State& state) {
  const auto s = noise_signal(static_cast<double>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(extract_frames_serial(s, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 10);
}

void BM_ExtractParallel(benchmark::State& state) {
  const auto s = noise_signal(static_cast<double>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(extract_frames(s, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 10);
}

void BM_PredictSerial(benchmark::State& state) {
  const auto model = build_model(3);
  const auto samples = random_samples(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(predict_batch_serial(model, samples));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PredictParallel(benchmark::State& state) {
  const auto model = build_model(3);
  const auto samples = random_samples(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(predict_batch(model, samples));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_GenerateCorpus(benchmark::State& state) {
  const std::vector<double> rpm = {1800.0, 3000.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_corpus(static_cast<std::size_t>(state.range(0)), 0.1, rpm, 5));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 3);
}

BENCHMARK(BM_ExtractSerial)->Arg(10)->Arg(60)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ExtractParallel)->Arg(10)->Arg(60)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictSerial)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictParallel)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GenerateCorpus)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
