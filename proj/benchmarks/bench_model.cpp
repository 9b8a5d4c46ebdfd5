#include <benchmark/benchmark.h>

#include "subaudit/core/sample_set.hpp"
#include "subaudit/detectors/subspace.hpp"
#include "subaudit/toymodel/toy_model.hpp"

using namespace subaudit;

namespace {

void BM_SampleCompletion(benchmark::State& state) {
  const auto model = ToyModel::create(32, 8, 1, "spec", "spec");
  const auto length = static_cast<std::size_t>(state.range(0));
  const TokenSequence prompt{0, 5, 9, 14};
  Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(sample_completion(model, prompt, {1.0, length, false}, rng));
}
BENCHMARK(BM_SampleCompletion)->Arg(10)->Arg(50);

void BM_GreedyDecode(benchmark::State& state) {
  const auto model = ToyModel::create(static_cast<std::size_t>(state.range(0)), 8, 1, "spec", "spec");
  const TokenSequence prompt{0, 5, 9, 14};
  Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(decode(model, prompt, {1.0, 50, true}, rng));
}
BENCHMARK(BM_GreedyDecode)->Arg(32)->Arg(256);

void BM_SubspaceFingerprint(benchmark::State& state) {
  const auto vocab = static_cast<std::size_t>(state.range(0));
  const auto model = ToyModel::create(vocab, 8, 1, "spec", "spec");
  Rng rng(5);
  std::vector<Eigen::VectorXd> logits;
  const auto prompts = PromptSet::random(32, 8, vocab, rng);
  for (const auto& p : prompts.prompts()) logits.push_back(model.next_logits(p).values);
  for (auto _ : state) benchmark::DoNotOptimize(subspace_fingerprint(logits, LogitKind::kRawLogits));
}
BENCHMARK(BM_SubspaceFingerprint)->Arg(32)->Arg(256);

void BM_Quantize(benchmark::State& state) {
  const auto model = ToyModel::create(256, 16, 1, "spec", "spec");
  for (auto _ : state) benchmark::DoNotOptimize(quantize(model, 0.01));
}
BENCHMARK(BM_Quantize);

}  // namespace
