#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "subaudit/core/rng.hpp"
#include "subaudit/core/sample_set.hpp"
#include "subaudit/core/tokens.hpp"
#include "subaudit/toymodel/toy_model.hpp"

namespace subaudit {

/// k(x, y) = sum_i 1{x_i == y_i} over equal-length (padded) sequences.
double hamming_kernel(std::span<const TokenId> x, std::span<const TokenId> y);

/// n^2 m^2 * MMD^2(P, Q) as an exact integer.
///
/// Because the Hamming kernel is a sum of per-position indicator kernels,
///   n^2 m^2 MMD^2 = sum_{pos, tok} (m * #P[pos]=tok - n * #Q[pos]=tok)^2,
/// which needs O((n+m) L) work instead of O((n+m)^2 L).
std::int64_t mmd_squared_scaled(const SampleSet& p, const SampleSet& q);

/// Biased (V-statistic) estimate of MMD^2 under the Hamming kernel.
double mmd_squared(const SampleSet& p, const SampleSet& q);

struct MmdResult {
  double mmd_squared = 0.0;
  double p_value = 1.0;
  std::size_t permutations = 0;
  std::size_t n_p = 0;
  std::size_t n_q = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  bool reject = false;
};

/// Permutation test of P == Q. Labels are shuffled within prompt groups
/// (completions sharing a prompt), preserving group sizes; the p-value is
/// (1 + #{permuted >= observed}) / (B + 1). Result is independent of `threads`.
MmdResult permutation_test(const SampleSet& p, const SampleSet& q, std::size_t permutations, double alpha,
                           Rng& rng, std::size_t threads = 1);

struct MixtureDraw {
  TokenSequence completion;
  bool from_alt = false;
};

/// Serves `alt` with probability `substitution_rate`, otherwise `spec`, so the
/// induced law is (1 - s) P_spec + s P_alt.
MixtureDraw mixture_sampler(const ToyModel& spec, const ToyModel& alt, double substitution_rate,
                            std::span<const TokenId> prompt, const DecodingParams& params, Rng& rng);

struct PowerConfig {
  std::size_t completions_per_prompt = 10;
  std::size_t mc_runs = 100;
  std::size_t permutations = 1000;
  double alpha = 0.05;
  DecodingParams decoding{1.0, 50, false};
  std::size_t threads = 0;
};

struct PowerCurve {
  std::vector<double> substitution_rates;
  std::vector<double> power;
  std::size_t mc_runs = 0;
  std::size_t permutations = 0;
  double alpha = 0.0;
  /// Completions per side per Monte-Carlo trial.
  std::size_t samples_per_side = 0;
};

/// Monte-Carlo power of the MMD permutation test against the mixture
/// alternative, one point per substitution rate.
PowerCurve power_estimate(const ToyModel& spec, const ToyModel& alt, std::span<const double> substitution_rates,
                          const PromptSet& prompts, const PowerConfig& config, Rng& rng);

/// CSV with header `s,power,mc_runs,B,alpha,n`.
std::string power_curve_csv(const PowerCurve& curve);
void write_power_csv(const PowerCurve& curve, const std::filesystem::path& path);

}  // namespace subaudit
