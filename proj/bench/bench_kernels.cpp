// Parallel kernels against their serial references. Thread count follows
// OMP_NUM_THREADS / CME_THREADS.

#include <benchmark/benchmark.h>

#include "cme/dfl.hpp"
#include "cme/matching.hpp"
#include "cme/memory.hpp"
#include "cme/parallel.hpp"
#include "cme/rng.hpp"
#include "naive.hpp"

namespace {

cme::FeatureMap random_map(std::uint64_t seed, std::size_t h, std::size_t w, std::size_t c) {
  cme::Rng rng(seed);
  cme::FeatureMap fm(h, w, c);
  for (double& v : fm.data) v = rng.normal();
  return fm;
}

cme::MemoryBank random_bank(std::uint64_t seed, std::size_t entries, std::size_t c) {
  const cme::FeatureMap keys = cme::normalize_features(random_map(seed, entries, 1, c));
  cme::Rng rng(seed + 7);
  cme::MemoryBank bank(c);
  for (std::size_t j = 0; j < entries; ++j) {
    const double fg = rng.uniform() < 0.3 ? 1.0 : 0.0;
    bank.append(keys.pixel(j), fg, 1.0 - fg);
  }
  return bank;
}

struct MatchingCase {
  cme::FeatureMap query;
  cme::MemoryBank bank;
};

MatchingCase matching_case(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto entries = static_cast<std::size_t>(state.range(1));
  return {cme::normalize_features(random_map(1, side, side, 64)), random_bank(2, entries, 64)};
}

void BM_AffinityParallel(benchmark::State& state) {
  const auto mc = matching_case(state);
  for (auto _ : state) benchmark::DoNotOptimize(cme::compute_affinity(mc.query, mc.bank));
}

void BM_AffinitySerial(benchmark::State& state) {
  const auto mc = matching_case(state);
  for (auto _ : state) benchmark::DoNotOptimize(cme::oracle::naive_affinity(mc.query, mc.bank));
}

void BM_SimilarityParallel(benchmark::State& state) {
  const auto mc = matching_case(state);
  for (auto _ : state) benchmark::DoNotOptimize(cme::similarity_maps(mc.query, mc.bank, 3));
}

void BM_SimilaritySerial(benchmark::State& state) {
  const auto mc = matching_case(state);
  for (auto _ : state) benchmark::DoNotOptimize(cme::oracle::naive_similarity(mc.query, mc.bank, 3));
}

void BM_DflForwardParallel(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto q = random_map(3, side, side, 16);
  const auto r = random_map(4, side, side, 16);
  const cme::Mask p1(side, side, 1.0);
  const auto params = cme::dfl_init_params(5, 16, 16);
  for (auto _ : state) benchmark::DoNotOptimize(cme::dfl_forward(q, r, p1, params));
}

void BM_DflForwardSerial(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto q = random_map(3, side, side, 16);
  const auto r = random_map(4, side, side, 16);
  const cme::Mask p1(side, side, 1.0);
  const auto params = cme::dfl_init_params(5, 16, 16);
  const cme::oracle::NaiveDflWeights w{16, 16, params.query_proj.data, params.ref_proj.data,
                                       params.value_proj.data, params.fuse_proj.data};
  for (auto _ : state) benchmark::DoNotOptimize(cme::oracle::naive_dfl_forward(q, r, p1, w));
}

}  // namespace

BENCHMARK(BM_AffinityParallel)->Args({16, 1024})->Args({32, 4096});
BENCHMARK(BM_AffinitySerial)->Args({16, 1024})->Args({32, 4096});
BENCHMARK(BM_SimilarityParallel)->Args({16, 1024})->Args({32, 4096});
BENCHMARK(BM_SimilaritySerial)->Args({16, 1024})->Args({32, 4096});
BENCHMARK(BM_DflForwardParallel)->Arg(8)->Arg(16);
BENCHMARK(BM_DflForwardSerial)->Arg(8)->Arg(16);

int main(int argc, char** argv) {
  cme::apply_thread_limit_from_env();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
