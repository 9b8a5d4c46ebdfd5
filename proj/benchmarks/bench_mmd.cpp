#include <benchmark/benchmark.h>

#include "subaudit/detectors/audit.hpp"
#include "subaudit/stattest/mmd.hpp"

using namespace subaudit;

namespace {

struct Samples {
  SampleSet p;
  SampleSet q;
};

Samples make_samples(std::size_t prompts, std::size_t per_prompt, std::size_t length) {
  const auto spec = ToyModel::create(32, 8, 1, "spec", "spec");
  const auto alt = quantize(spec, 0.25);
  Rng rng(7);
  const auto set = PromptSet::random(prompts, 8, spec.vocab(), rng).prompts();
  const DecodingParams params{1.0, length, false};
  return {reference_samples(spec, set, per_prompt, params, rng), reference_samples(alt, set, per_prompt, params, rng)};
}

void BM_MmdScaled(benchmark::State& state) {
  const auto s = make_samples(static_cast<std::size_t>(state.range(0)), 10, 50);
  for (auto _ : state) benchmark::DoNotOptimize(mmd_squared_scaled(s.p, s.q));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.p.size() + s.q.size()));
}
BENCHMARK(BM_MmdScaled)->Arg(5)->Arg(25)->Arg(100);

void BM_PermutationTest(benchmark::State& state) {
  const auto s = make_samples(25, 10, 50);
  const auto permutations = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    Rng rng(11);
    benchmark::DoNotOptimize(permutation_test(s.p, s.q, permutations, 0.05, rng));
  }
}
BENCHMARK(BM_PermutationTest)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_HammingKernel(benchmark::State& state) {
  const auto s = make_samples(1, 2, static_cast<std::size_t>(state.range(0)));
  const auto a = s.p.completions()[0];
  const auto b = s.q.completions()[0];
  for (auto _ : state) benchmark::DoNotOptimize(hamming_kernel(a, b));
}
BENCHMARK(BM_HammingKernel)->Arg(50)->Arg(500);

}  // namespace
