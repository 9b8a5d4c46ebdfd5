#include <ostream>

#include "subaudit/cli/commands.hpp"
#include "subaudit/stattest/mmd.hpp"

namespace subaudit::cli {

int cmd_power(const PowerOptions& options, Console console) {
  if (options.mc == 0 || options.permutations == 0 || options.prompts == 0 || options.completions == 0) {
    *console.err << "power: --mc, --permutations, --prompts and --completions must be >= 1\n";
    return kExitUsage;
  }
  if (options.grid.empty()) {
    *console.err << "power: empty substitution-rate grid\n";
    return kExitUsage;
  }
  for (double s : options.grid) {
    if (!(s >= 0.0 && s <= 1.0)) {
      *console.err << "power: substitution rate " << s << " outside [0, 1]\n";
      return kExitUsage;
    }
  }
  if (!(options.alpha > 0.0 && options.alpha < 1.0) || !(options.temperature > 0.0)) {
    *console.err << "power: alpha must be in (0, 1) and temperature > 0\n";
    return kExitUsage;
  }
  try {
    const ToyModel spec = load_model(options.spec);
    const ToyModel alt = load_model(options.alt);
    Rng rng(options.seed);
    Rng prompt_rng = rng.split(0);
    const PromptSet prompts = PromptSet::random(options.prompts, options.prompt_length, spec.vocab(), prompt_rng);
    PowerConfig config;
    config.completions_per_prompt = options.completions;
    config.mc_runs = options.mc;
    config.permutations = options.permutations;
    config.alpha = options.alpha;
    config.decoding = DecodingParams{options.temperature, options.length, false};
    config.threads = options.threads;
    Rng trial_rng = rng.split(1);
    const PowerCurve curve = power_estimate(spec, alt, options.grid, prompts, config, trial_rng);
    if (options.output) {
      write_power_csv(curve, *options.output);
    } else {
      *console.out << power_curve_csv(curve);
    }
    return kExitOk;
  } catch (const std::exception& e) {
    *console.err << "power: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace subaudit::cli
