// Serial reference vs OpenMP kernel, same inputs. Compare the
// <name>/serial and <name>/parallel rows; threads come from OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <vector>

#include "ncl/kernels.hpp"
#include "ncl/rng.hpp"
#include "ncl/synth.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  ncl::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Parallel>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) ncl::kernels::matmul(a, b, out, n, n, n);
    else ncl::kernels::serial::matmul(a, b, out, n, n, n);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <bool Parallel>
void BM_cosine_matrix(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  const auto q = random_values(n * d, 3), g = random_values(n * d, 4);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) ncl::kernels::cosine_matrix(q, g, out, n, n, d);
    else ncl::kernels::serial::cosine_matrix(q, g, out, n, n, d);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_true_match_ranks(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto sims = random_values(n * n, 5);
  std::vector<std::size_t> ranks(n);
  for (auto _ : state) {
    if constexpr (Parallel) ncl::kernels::true_match_ranks(sims, ranks, n, n);
    else ncl::kernels::serial::true_match_ranks(sims, ranks, n, n);
    benchmark::DoNotOptimize(ranks.data());
  }
}

template <bool Parallel>
void BM_generate_dataset(benchmark::State& state) {
  ncl::DatasetSpec spec;
  spec.triplets = static_cast<std::size_t>(state.range(0));
  spec.mismatch_rate = 0.3;
  for (auto _ : state) {
    auto data = Parallel ? ncl::generate_dataset(spec) : ncl::generate_dataset_serial(spec);
    benchmark::DoNotOptimize(data.samples.data());
  }
}

}  // namespace

BENCHMARK(BM_matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul<true>)->Name("matmul/parallel")->Arg(64)->Arg(256)->UseRealTime();
BENCHMARK(BM_cosine_matrix<false>)->Name("cosine_matrix/serial")->Arg(400)->Arg(2000);
BENCHMARK(BM_cosine_matrix<true>)->Name("cosine_matrix/parallel")->Arg(400)->Arg(2000)->UseRealTime();
BENCHMARK(BM_true_match_ranks<false>)->Name("true_match_ranks/serial")->Arg(400)->Arg(2000);
BENCHMARK(BM_true_match_ranks<true>)->Name("true_match_ranks/parallel")->Arg(400)->Arg(2000)->UseRealTime();
BENCHMARK(BM_generate_dataset<false>)->Name("generate_dataset/serial")->Arg(2000);
BENCHMARK(BM_generate_dataset<true>)->Name("generate_dataset/parallel")->Arg(2000)->UseRealTime();

BENCHMARK_MAIN();
