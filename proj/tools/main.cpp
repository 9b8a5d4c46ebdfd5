#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "subaudit/cli/commands.hpp"
#include "subaudit/core/error.hpp"

namespace cli = subaudit::cli;

int main(int argc, char** argv) {
  CLI::App app{"Model-substitution auditing toolkit: provider simulator, detectors and experiments"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  bool verbose = false;
  app.add_option("--seed", seed, "Global seed")->capture_default_str();
  app.add_flag("-v,--verbose", verbose, "Progress on stderr");

  cli::ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the provider simulator");
  serve_cmd->add_option("--config", serve.config, "Provider config (provider/1)")->required();
  serve_cmd->add_option("--host", serve.host)->capture_default_str();
  serve_cmd->add_option("--port", serve.port, "0 picks a free port")->capture_default_str();
  std::string port_file;
  serve_cmd->add_option("--port-file", port_file, "Write the bound port here");

  cli::AuditPlan plan;
  std::string detectors = "all";
  std::string detector_config;
  std::string report_path;
  auto* audit_cmd = app.add_subcommand("audit", "Audit an endpoint against a reference model");
  audit_cmd->add_option("--endpoint", plan.endpoint, "host:port")->required();
  audit_cmd->add_option("--model", plan.claimed_name, "Claimed model name")->required();
  audit_cmd->add_option("--reference", plan.reference_model, "Reference model file")->required();
  audit_cmd->add_option("--detectors", detectors, "'all' or comma-separated names")->capture_default_str();
  audit_cmd->add_option("--detector-config", detector_config, "Flat key-value detector config");
  audit_cmd->add_option("--in-flight", plan.config.in_flight, "Concurrent requests while sampling");
  audit_cmd->add_option("--out", report_path, "Report path (audit-report/1)");

  cli::PowerOptions power;
  std::string power_out;
  auto* power_cmd = app.add_subcommand("power", "MMD power curve against the mixture alternative");
  power_cmd->add_option("--spec", power.spec)->required();
  power_cmd->add_option("--alt", power.alt)->required();
  power_cmd->add_option("--grid", power.grid, "Substitution rates in [0, 1]")->delimiter(',');
  power_cmd->add_option("--prompts", power.prompts)->capture_default_str();
  power_cmd->add_option("--prompt-length", power.prompt_length)->capture_default_str();
  power_cmd->add_option("--completions", power.completions, "Completions per prompt")->capture_default_str();
  power_cmd->add_option("--length", power.length, "Completion length L")->capture_default_str();
  power_cmd->add_option("--temperature", power.temperature)->capture_default_str();
  power_cmd->add_option("--mc", power.mc, "Monte-Carlo trials per rate")->capture_default_str();
  power_cmd->add_option("--permutations,-B", power.permutations)->capture_default_str();
  power_cmd->add_option("--alpha", power.alpha)->capture_default_str();
  power_cmd->add_option("--threads", power.threads, "0 = all cores")->capture_default_str();
  power_cmd->add_option("--out", power_out, "CSV path (stdout if omitted)");

  cli::FingerprintOptions fingerprint;
  auto* fp_cmd = app.add_subcommand("fingerprint", "Estimate an endpoint's logit subspace");
  fp_cmd->add_option("--endpoint", fingerprint.endpoint, "host:port")->required();
  fp_cmd->add_option("--model", fingerprint.model, "Model name (default: first listed)");
  fp_cmd->add_option("-n,--samples", fingerprint.samples)->capture_default_str();
  fp_cmd->add_option("--out", fingerprint.output)->required();

  cli::FixtureOptions fixtures;
  auto* fx_cmd = app.add_subcommand("make-fixtures", "Write the canonical fixture tree");
  fx_cmd->add_option("--out", fixtures.output)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitUsage;
  }

  const cli::Console console = cli::default_console(verbose);
  try {
    if (*serve_cmd) {
      serve.seed = seed;
      if (!port_file.empty()) serve.port_file = port_file;
      return cli::cmd_serve(serve, console);
    }
    if (*audit_cmd) {
      const std::size_t in_flight = plan.config.in_flight;
      if (!detector_config.empty()) plan.config = subaudit::load_detector_config(detector_config);
      if (audit_cmd->count("--in-flight") > 0) plan.config.in_flight = in_flight;
      plan.detectors = cli::parse_detector_list(detectors);
      plan.seed = seed;
      if (!report_path.empty()) plan.output = report_path;
      return cli::cmd_audit(plan, console);
    }
    if (*power_cmd) {
      power.seed = seed;
      if (!power_out.empty()) power.output = power_out;
      return cli::cmd_power(power, console);
    }
    if (*fp_cmd) {
      fingerprint.seed = seed;
      return cli::cmd_fingerprint(fingerprint, console);
    }
    if (*fx_cmd) {
      if (app.count("--seed") > 0) fixtures.seed = seed;
      return cli::cmd_make_fixtures(fixtures, console);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_code_for(e);
  }
  return cli::kExitUsage;
}
