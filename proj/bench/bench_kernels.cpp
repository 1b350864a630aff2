#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ltp/featbank.hpp"
#include "ltp/nn/kernels.hpp"
#include "ltp/synthesis.hpp"

namespace k = ltp::nn::kernels;

namespace {

std::vector<double> filled(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

using Gemm = void (*)(std::size_t, std::size_t, std::size_t, k::CSpan, k::CSpan, k::MSpan, bool);

template <Gemm F>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    F(n, n, n, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <void (*F)(std::size_t, std::size_t, k::CSpan, k::MSpan)>
void BM_softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n * n, 3);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    F(n, n, a, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <void (*F)(std::size_t, std::size_t, k::CSpan, double, k::MSpan, k::MSpan)>
void BM_normalize(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n * 64, 4);
  std::vector<double> out(n * 64), inv(n);
  for (auto _ : state) {
    F(n, 64, a, 1e-5, out, inv);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_synthesis(benchmark::State& state) {
  static const auto bank = ltp::featbank::generate_bank(ltp::featbank::BankConfig{});
  const ltp::synthesis::SynthesisParams params;
  const bool parallel = state.range(0) != 0;
  for (auto _ : state) {
    auto s = ltp::synthesis::synthesize_many(bank, params, 0, 64, parallel);
    benchmark::DoNotOptimize(s.data());
  }
}

}  // namespace

BENCHMARK(BM_gemm<k::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<k::par::gemm_nn>)->Name("gemm_nn/par")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<k::serial::gemm_nt>)->Name("gemm_nt/serial")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<k::par::gemm_nt>)->Name("gemm_nt/par")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<k::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<k::par::gemm_tn>)->Name("gemm_tn/par")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_softmax<k::serial::softmax_rows>)->Name("softmax/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_softmax<k::par::softmax_rows>)->Name("softmax/par")->Arg(64)->Arg(256);
BENCHMARK(BM_normalize<k::serial::normalize_rows>)->Name("normalize/serial")->Arg(192)->Arg(2048);
BENCHMARK(BM_normalize<k::par::normalize_rows>)->Name("normalize/par")->Arg(192)->Arg(2048);
BENCHMARK(BM_synthesis)->Name("synthesize_many")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
