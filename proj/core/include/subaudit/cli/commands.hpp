#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "subaudit/core/report.hpp"
#include "subaudit/detectors/audit.hpp"
#include "subaudit/service/client.hpp"

namespace subaudit::cli {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitSubstitution = 1,
  kExitUsage = 2,
  kExitTransport = 3,
};

/// Maps an Error code to an exit code: transport failures give 3, everything
/// else 2.
int exit_code_for(const std::exception& e);

struct Console {
  std::ostream* out;
  std::ostream* err;
  bool verbose = false;
};
Console default_console(bool verbose = false);

struct ServeOptions {
  std::filesystem::path config;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::uint64_t seed = 0;
  /// Written with the bound port once listening (useful with port 0).
  std::optional<std::filesystem::path> port_file;
};

/// Serves until SIGINT/SIGTERM or until `should_stop` returns true (polled).
int cmd_serve(const ServeOptions& options, Console console, std::function<bool()> should_stop = {});

struct AuditPlan {
  std::string endpoint;
  std::string claimed_name;
  std::filesystem::path reference_model;
  std::vector<std::string> detectors;
  DetectorConfig config;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> output;

  /// Throws kInput on an empty or unknown detector list or invalid budgets.
  void validate() const;
};

/// Parses "all" or a comma-separated list of detector names.
std::vector<std::string> parse_detector_list(const std::string& text);

/// Runs the plan's detectors in order. Detector i draws from
/// Rng(seed).split(index of its name in detector_names()), so a detector's
/// result does not depend on which others run.
AuditReport run_audit(const AuditPlan& plan, const ToyModel& reference, CompletionClient& client, Console console);

/// 1 if any verdict convicts, else 3 if a detector hit a transport failure,
/// else 0.
int audit_exit_code(const AuditReport& report);

/// Full audit over HTTP; writes the report to plan.output when set.
int cmd_audit(const AuditPlan& plan, Console console);

struct PowerOptions {
  std::filesystem::path spec;
  std::filesystem::path alt;
  std::vector<double> grid{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::size_t prompts = 25;
  std::size_t prompt_length = 8;
  std::size_t completions = 10;
  std::size_t length = 50;
  double temperature = 1.0;
  std::size_t mc = 100;
  std::size_t permutations = 1000;
  double alpha = 0.05;
  std::size_t threads = 0;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> output;
};

int cmd_power(const PowerOptions& options, Console console);

struct FingerprintOptions {
  std::string endpoint;
  /// Empty: first model listed by the endpoint.
  std::string model;
  std::size_t samples = 32;
  std::size_t prompt_length = 8;
  std::uint64_t seed = 0;
  std::filesystem::path output;
};

/// Writes a signature, or an inapplicable notice when the endpoint does not
/// disclose full log-probability vectors.
int cmd_fingerprint(const FingerprintOptions& options, CompletionClient& client, Console console);
int cmd_fingerprint(const FingerprintOptions& options, Console console);

struct FixtureOptions {
  std::filesystem::path output;
  std::uint64_t seed = 1;
};

/// Canonical fixture tree; see fixtures.cpp for the layout.
int cmd_make_fixtures(const FixtureOptions& options, Console console);

}  // namespace subaudit::cli
