#include "subaudit/detectors/identity.hpp"

#include <algorithm>
#include <cctype>

#include "subaudit/core/error.hpp"
#include "subaudit/detectors/guard.hpp"

namespace subaudit {

IdentityProbeConfig IdentityProbeConfig::defaults_for(const std::string& claimed_name) {
  IdentityProbeConfig config;
  config.templates = identity_templates();
  config.patterns.push_back(claimed_name.substr(0, claimed_name.find('-')));
  return config;
}

void IdentityProbeConfig::validate() const {
  if (queries == 0) throw Error(ErrorCode::kInput, "identity probe needs at least one query");
  if (templates.empty()) throw Error(ErrorCode::kInput, "identity probe needs at least one template");
  if (patterns.empty() || std::any_of(patterns.begin(), patterns.end(), [](const auto& p) { return p.empty(); })) {
    throw Error(ErrorCode::kInput, "identity probe needs non-empty patterns");
  }
}

bool contains_ignore_case(std::string_view haystack, std::string_view needle) {
  auto lower = [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); };
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(),
                        [&](char a, char b) { return lower(a) == lower(b); });
  return it != haystack.end();
}

DetectorVerdict identity_probe(CompletionClient& client, const std::string& claimed_name,
                               const IdentityProbeConfig& config) {
  config.validate();
  return run_guarded("identity", [&] {
    std::size_t matched = 0;
    for (std::size_t i = 0; i < config.queries; ++i) {
      const auto& t = config.templates[i % config.templates.size()];
      CompletionRequest request;
      request.model = claimed_name;
      request.prompt = identity_prompt(t);
      request.max_tokens = 16;
      request.temperature = config.temperature;
      const auto response = client.complete(request);
      const bool hit = std::any_of(config.patterns.begin(), config.patterns.end(),
                                   [&](const std::string& p) { return contains_ignore_case(response.text, p); });
      if (hit) ++matched;
    }
    return identity_verdict(static_cast<double>(matched) / static_cast<double>(config.queries), config.queries);
  });
}

DetectorVerdict identity_verdict(double match_fraction, std::size_t queries) {
  DetectorVerdict verdict;
  verdict.detector = "identity";
  verdict.threshold = 0.5;
  verdict.details["honest_threshold"] = 0.9;
  verdict.statistic = match_fraction;
  verdict.details["queries"] = static_cast<double>(queries);
  if (verdict.statistic < 0.5) {
    verdict.decision = Decision::kSubstitutionDetected;
    verdict.note = "identity answers do not name the claimed model family";
  } else if (verdict.statistic >= 0.9) {
    verdict.decision = Decision::kHonestConsistent;
  } else {
    verdict.decision = Decision::kInconclusive;
    verdict.note = "identity answers are mixed";
  }
  return verdict;
}

}  // namespace subaudit
