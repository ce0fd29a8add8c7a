#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "fseg/cnn.hpp"
#include "fseg/dataset.hpp"
#include "fseg/imagenorm.hpp"
#include "fseg/parallel.hpp"
#include "fseg/patch.hpp"
#include "fseg/pipeline.hpp"

using namespace fseg;

namespace {

std::vector<double> random_input(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

const FundusRecord& fundus(int size) {
  static std::map<int, FundusRecord> cache;
  auto it = cache.find(size);
  if (it == cache.end()) it = cache.emplace(size, synth_fundus(3, size)).first;
  return it->second;
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
  Cnn net;
  init(net, 1);
  ForwardCache cache(net.geometry());
  const auto input = random_input(net.geometry().input_size(), 1);
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, input, cache).data());
}
BENCHMARK(BM_Forward);

static void BM_ForwardBackward(benchmark::State& state) {
  Cnn net;
  init(net, 1);
  ForwardCache cache(net.geometry());
  std::vector<double> grad(net.param_count());
  const auto input = random_input(net.geometry().input_size(), 2);
  for (auto _ : state) {
    forward(net, input, cache);
    backward(net, cache, 2, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(BM_ForwardBackward);

static void BM_PatchBuild(benchmark::State& state) {
  const FundusRecord& rec = fundus(256);
  const PatchSource source = prepare(rec.image, rec.mask);
  PatchInput input;
  int x = 0;
  for (auto _ : state) {
    source.build(64 + x, 128, input);
    x = (x + 1) % 128;
    benchmark::DoNotOptimize(input.samples.data());
  }
}
BENCHMARK(BM_PatchBuild);

static void BM_Resize(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const Image src(side, side, 1, random_input(static_cast<std::size_t>(side) * side, 4));
  for (auto _ : state) benchmark::DoNotOptimize(resize_bicubic(src, 33, 33).samples().data());
}
BENCHMARK(BM_Resize)->Arg(7)->Arg(165);

static void BM_NormalizeFundus(benchmark::State& state) {
  const FundusRecord& rec = fundus(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(normalize_fundus(rec.image, rec.mask).samples().data());
}
BENCHMARK(BM_NormalizeFundus)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_SegmentImage(benchmark::State& state) {
  const FundusRecord& rec = fundus(static_cast<int>(state.range(0)));
  const PatchSource source = prepare(rec.image, rec.mask);
  Cnn net;
  init(net, 5);
  WorkerPool pool(0);
  for (auto _ : state) benchmark::DoNotOptimize(segment(net, source, rec.mask, pool));
}
BENCHMARK(BM_SegmentImage)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
