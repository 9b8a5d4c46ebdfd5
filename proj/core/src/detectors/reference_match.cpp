#include "subaudit/detectors/reference_match.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "subaudit/core/error.hpp"
#include "subaudit/detectors/guard.hpp"

namespace subaudit {

DetectorVerdict greedy_match(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                             const std::vector<TokenSequence>& prompts, std::size_t max_tokens) {
  if (prompts.empty()) throw Error(ErrorCode::kInput, "greedy_match needs at least one prompt");
  return run_guarded("greedy", [&] {
    const DecodingParams params{1.0, max_tokens, true};
    Rng unused(0);
    std::size_t matches = 0;
    for (const auto& prompt : prompts) {
      CompletionRequest request;
      request.model = claimed_name;
      request.prompt = prompt;
      request.max_tokens = max_tokens;
      request.greedy = true;
      const auto response = client.complete(request);
      if (response.tokens == decode(reference, prompt, params, unused).tokens) ++matches;
    }
    DetectorVerdict v;
    v.detector = "greedy";
    v.threshold = 1.0;
    v.statistic = static_cast<double>(matches) / static_cast<double>(prompts.size());
    v.details["prompts"] = static_cast<double>(prompts.size());
    if (matches == prompts.size()) {
      v.decision = Decision::kHonestConsistent;
    } else {
      v.decision = Decision::kInconclusive;
      v.note = "greedy outputs differ from the reference; mismatches alone do not prove substitution";
    }
    return v;
  });
}

DetectorVerdict logprob_compare(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                                const std::vector<TokenSequence>& probes, double tau_mean, double tau_max,
                                std::size_t max_tokens) {
  if (probes.empty()) throw Error(ErrorCode::kInput, "logprob_compare needs at least one probe");
  return run_guarded("logprob", [&]() -> DetectorVerdict {
    double sum = 0.0;
    double max = 0.0;
    std::size_t count = 0;
    for (const auto& prompt : probes) {
      CompletionRequest request;
      request.model = claimed_name;
      request.prompt = prompt;
      request.max_tokens = max_tokens;
      request.greedy = true;
      request.logprobs = LogprobPolicy::top_k(1);
      const auto response = client.complete(request);
      if (!response.logprobs) return inapplicable_verdict("logprob", "provider discloses no logprobs");
      const auto& observed = *response.logprobs;
      const auto shared = std::min({observed.size(), response.tokens.size(), kLogprobPositions});
      const TokenSequence completion(response.tokens.begin(), response.tokens.begin() + static_cast<long>(shared));
      const auto expected = token_logprobs(reference, prompt, completion, 1.0);
      for (std::size_t i = 0; i < shared; ++i) {
        const double diff = std::abs(observed[i].logprob - expected[i].chosen);
        // A token the reference deems impossible is an unbounded difference.
        const double d = std::isfinite(diff) ? diff : std::numeric_limits<double>::infinity();
        sum += d;
        max = std::max(max, d);
        ++count;
      }
    }
    DetectorVerdict v;
    v.detector = "logprob";
    v.threshold = tau_mean;
    v.statistic = count > 0 ? sum / static_cast<double>(count) : 0.0;
    v.details["max_abs_diff"] = max;
    v.details["tau_max"] = tau_max;
    v.details["positions"] = static_cast<double>(count);
    if (count == 0) {
      v.decision = Decision::kInconclusive;
      v.note = "no shared positions to compare";
    } else if (v.statistic > tau_mean || max > tau_max) {
      v.decision = Decision::kSubstitutionDetected;
      v.note = "reported logprobs differ from the reference";
    } else {
      v.decision = Decision::kHonestConsistent;
    }
    return v;
  });
}

}  // namespace subaudit
