#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "subaudit/core/report.hpp"
#include "subaudit/service/client.hpp"
#include "subaudit/service/provider.hpp"

namespace subaudit {

struct IdentityProbeConfig {
  std::vector<IdentityTemplate> templates;
  /// Matched case-insensitively as byte substrings of the response text.
  std::vector<std::string> patterns;
  std::size_t queries = 20;
  double temperature = 0.6;

  /// Service templates and the family prefix of `claimed_name` (text before
  /// the first '-') as the only pattern.
  static IdentityProbeConfig defaults_for(const std::string& claimed_name);

  /// Throws kInput when queries == 0 or templates/patterns are empty.
  void validate() const;
};

/// ASCII case-insensitive substring search.
bool contains_ignore_case(std::string_view haystack, std::string_view needle);

/// Asks the identity templates round-robin. Statistic: fraction of answers
/// containing a pattern; < 0.5 convicts, >= 0.9 is honest-consistent.
/// Transport and API failures give an inapplicable verdict.
DetectorVerdict identity_probe(CompletionClient& client, const std::string& claimed_name,
                               const IdentityProbeConfig& config);

/// Decision rule on a match fraction.
DetectorVerdict identity_verdict(double match_fraction, std::size_t queries);

}  // namespace subaudit
