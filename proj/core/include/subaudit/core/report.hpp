#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace subaudit {

enum class Decision {
  kHonestConsistent,
  kSubstitutionDetected,
  kInconclusive,
  kInapplicable,
};

std::string_view to_string(Decision d);
/// Inverse of to_string; throws kParse on unknown names.
Decision decision_from_string(std::string_view name);

/// Outcome of one detector. `statistic` is compared against `threshold` in a
/// detector-specific direction; `details` carries any secondary statistics.
struct DetectorVerdict {
  std::string detector;
  double statistic = 0.0;
  double threshold = 0.0;
  std::optional<double> p_value;
  Decision decision = Decision::kInconclusive;
  std::string note;
  std::map<std::string, double> details;

  friend bool operator==(const DetectorVerdict&, const DetectorVerdict&) = default;
};

DetectorVerdict inapplicable_verdict(std::string detector, std::string note);

struct AuditReport {
  static constexpr std::string_view kSchema = "audit-report/1";

  std::string endpoint;
  std::string claimed_model;
  std::vector<DetectorVerdict> verdicts;
  std::uint64_t queries_used = 0;
  std::uint64_t seed = 0;
  /// Wall-clock fields are optional so that reports stay reproducible by default.
  std::optional<std::string> started_at;
  std::optional<double> elapsed_seconds;

  [[nodiscard]] bool any_substitution_detected() const;
  [[nodiscard]] const DetectorVerdict* find(std::string_view detector) const;

  friend bool operator==(const AuditReport&, const AuditReport&) = default;
};

std::string report_to_json(const AuditReport& report);
AuditReport report_from_json(std::string_view text);
void write_report(const AuditReport& report, const std::filesystem::path& path);
AuditReport read_report(const std::filesystem::path& path);

}  // namespace subaudit
