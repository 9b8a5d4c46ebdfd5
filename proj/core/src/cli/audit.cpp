#include <algorithm>
#include <ostream>
#include <sstream>

#include "subaudit/cli/commands.hpp"
#include "subaudit/core/error.hpp"
#include "subaudit/core/format.hpp"

namespace subaudit::cli {

std::vector<std::string> parse_detector_list(const std::string& text) {
  if (text == "all") return detector_names();
  std::vector<std::string> names;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) names.push_back(item);
  }
  return names;
}

void AuditPlan::validate() const {
  if (detectors.empty()) throw Error(ErrorCode::kInput, "audit plan needs at least one detector");
  const auto& known = detector_names();
  for (const auto& d : detectors) {
    if (std::find(known.begin(), known.end(), d) == known.end()) {
      throw Error(ErrorCode::kInput, "unknown detector '" + d + "'");
    }
  }
  if (claimed_name.empty()) throw Error(ErrorCode::kInput, "audit plan needs a claimed model name");
  config.validate();
}

AuditReport run_audit(const AuditPlan& plan, const ToyModel& reference, CompletionClient& client, Console console) {
  plan.validate();
  AuditReport report;
  report.endpoint = plan.endpoint;
  report.claimed_model = plan.claimed_name;
  report.seed = plan.seed;
  const auto start_queries = client.queries();
  const Rng root(plan.seed);
  const auto& known = detector_names();
  for (const auto& name : plan.detectors) {
    const auto index = static_cast<std::uint64_t>(std::find(known.begin(), known.end(), name) - known.begin());
    Rng rng = root.split(index);
    if (console.verbose) *console.err << "audit: running " << name << '\n';
    auto verdict = run_detector(name, client, plan.claimed_name, reference, plan.config, rng);
    if (console.verbose) {
      *console.err << "audit: " << name << " -> " << to_string(verdict.decision)
                   << " (statistic " << format_double(verdict.statistic) << ")\n";
    }
    report.verdicts.push_back(std::move(verdict));
  }
  report.queries_used = client.queries() - start_queries;
  return report;
}

int audit_exit_code(const AuditReport& report) {
  if (report.any_substitution_detected()) return kExitSubstitution;
  const bool transport = std::any_of(report.verdicts.begin(), report.verdicts.end(), [](const DetectorVerdict& v) {
    auto it = v.details.find("transport_error");
    return it != v.details.end() && it->second != 0.0;
  });
  return transport ? kExitTransport : kExitOk;
}

int cmd_audit(const AuditPlan& plan, Console console) {
  try {
    plan.validate();
  } catch (const std::exception& e) {
    *console.err << "audit: " << e.what() << '\n';
    return kExitUsage;
  }
  std::optional<ToyModel> reference;
  std::pair<std::string, int> endpoint;
  try {
    reference.emplace(load_model(plan.reference_model));
    endpoint = parse_endpoint(plan.endpoint);
  } catch (const std::exception& e) {
    *console.err << "audit: " << e.what() << '\n';
    return kExitUsage;
  }

  HttpCompletionClient client(endpoint.first, endpoint.second);
  if (!client.healthy()) {
    *console.err << "audit: endpoint " << plan.endpoint << " is unreachable\n";
    return kExitTransport;
  }
  try {
    const AuditReport report = run_audit(plan, *reference, client, console);
    if (plan.output) write_report(report, *plan.output);
    for (const auto& v : report.verdicts) {
      *console.out << v.detector << ": " << to_string(v.decision) << " (statistic " << format_double(v.statistic)
                   << ", threshold " << format_double(v.threshold) << ")";
      if (!v.note.empty()) *console.out << " - " << v.note;
      *console.out << '\n';
    }
    const int code = audit_exit_code(report);
    *console.out << (code == kExitSubstitution ? "substitution detected" : "no substitution detected") << " after "
                 << report.queries_used << " queries\n";
    return code;
  } catch (const std::exception& e) {
    *console.err << "audit: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace subaudit::cli
