// Serial vs OpenMP timings of the hot kernels. Run with
// --benchmark_filter to select a kernel; the thread count follows
// OMP_NUM_THREADS.
#include "nmfsep/bss_eval.hpp"
#include "nmfsep/hrnmf.hpp"
#include "nmfsep/random.hpp"
#include "nmfsep/tf_transform.hpp"

#include <benchmark/benchmark.h>

using namespace nmfsep;

namespace {

Signal noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Signal x(n);
  for (auto &v : x) {
    v = rng.normal();
  }
  return x;
}

ExecPolicy policy(const benchmark::State &state) {
  return state.range(0) == 0 ? ExecPolicy::serial : ExecPolicy::parallel;
}

void BM_Stft(benchmark::State &state) {
  const auto plan = StftPlan::hann(512, 11025.0);
  const auto x = noise(11025, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(stft(x, plan, policy(state)));
  }
}

void BM_Istft(benchmark::State &state) {
  const auto spec = stft(noise(11025, 2), StftPlan::hann(512, 11025.0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(istft(spec, policy(state)));
  }
}

void BM_LerouxKernel(benchmark::State &state) {
  const auto plan = StftPlan::hann(512, 11025.0);
  const auto spec = stft(noise(11025, 3), plan);
  const auto kernel = leroux_kernel(plan, KernelTruncation::default_for(plan));
  for (auto _ : state) {
    benchmark::DoNotOptimize(apply_leroux_kernel(kernel, spec, policy(state)));
  }
}

void BM_HrnmfEStep(benchmark::State &state) {
  const auto x = stft(noise(11025, 4), StftPlan::hann(512, 11025.0));
  HrnmfOptions opts;
  opts.iterations = 1;
  const auto model = fit_hrnmf(x, opts).model;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hrnmf_e_step(x, model, policy(state)));
  }
}

void BM_BssScores(benchmark::State &state) {
  const std::vector<Signal> refs{noise(11025, 5), noise(11025, 6)};
  std::vector<Signal> est{noise(11025, 7), noise(11025, 8)};
  const BssEvaluator eval(refs, 512);
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval.scores(est, policy(state)));
  }
}

} // namespace

BENCHMARK(BM_Stft)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Istft)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LerouxKernel)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HrnmfEStep)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BssScores)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
