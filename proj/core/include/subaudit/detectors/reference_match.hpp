#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "subaudit/core/report.hpp"
#include "subaudit/service/client.hpp"
#include "subaudit/toymodel/toy_model.hpp"

namespace subaudit {

/// Requests greedy completions and compares them token for token with the
/// local reference. Statistic: fraction of exact matches. Only a perfect
/// match is honest-consistent; anything else is inconclusive, never a
/// conviction. Transport and API failures give an inapplicable verdict.
DetectorVerdict greedy_match(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                             const std::vector<TokenSequence>& prompts, std::size_t max_tokens);

inline constexpr double kDefaultTauMean = 1e-2;
inline constexpr double kDefaultTauMax = 5e-2;
inline constexpr std::size_t kLogprobPositions = 20;

/// Requests greedy completions with top-1 logprobs and teacher-forces each
/// completion through the reference. Statistic: mean absolute difference of
/// the chosen-token log-probabilities over the first 20 positions of every
/// probe (details carry the max). Convicts when mean > tau_mean or
/// max > tau_max. Inapplicable when the provider discloses no logprobs.
DetectorVerdict logprob_compare(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                                const std::vector<TokenSequence>& probes, double tau_mean = kDefaultTauMean,
                                double tau_max = kDefaultTauMax, std::size_t max_tokens = kLogprobPositions);

}  // namespace subaudit
