#include "subaudit/detectors/audit.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <variant>

#include <nlohmann/json.hpp>

#include "subaudit/core/error.hpp"
#include "subaudit/core/parallel.hpp"
#include "subaudit/detectors/benchmark.hpp"
#include "subaudit/detectors/guard.hpp"
#include "subaudit/detectors/identity.hpp"
#include "subaudit/detectors/reference_match.hpp"
#include "subaudit/stattest/mmd.hpp"

namespace subaudit {

namespace {

using Field = std::variant<std::size_t DetectorConfig::*, double DetectorConfig::*, std::string DetectorConfig::*>;

struct ConfigKey {
  const char* name;
  Field field;
  bool path = false;
};

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"prompt_length", &DetectorConfig::prompt_length},
      {"in_flight", &DetectorConfig::in_flight},
      {"identity.queries", &DetectorConfig::identity_queries},
      {"identity.temperature", &DetectorConfig::identity_temperature},
      {"identity.pattern", &DetectorConfig::identity_pattern},
      {"benchmark.suite", &DetectorConfig::benchmark_suite, true},
      {"benchmark.resamples", &DetectorConfig::benchmark_resamples},
      {"benchmark.runs", &DetectorConfig::benchmark_runs},
      {"benchmark.temperature", &DetectorConfig::benchmark_temperature},
      {"benchmark.z_threshold", &DetectorConfig::benchmark_z_threshold},
      {"greedy.prompts", &DetectorConfig::greedy_prompts},
      {"greedy.max_tokens", &DetectorConfig::greedy_max_tokens},
      {"greedy.prompt_file", &DetectorConfig::greedy_prompt_file, true},
      {"logprob.probes", &DetectorConfig::logprob_probes},
      {"logprob.tau_mean", &DetectorConfig::logprob_tau_mean},
      {"logprob.tau_max", &DetectorConfig::logprob_tau_max},
      {"subspace.samples", &DetectorConfig::subspace_samples},
      {"subspace.angle_threshold", &DetectorConfig::subspace_angle_threshold},
      {"mmd.prompts", &DetectorConfig::mmd_prompts},
      {"mmd.completions", &DetectorConfig::mmd_completions},
      {"mmd.length", &DetectorConfig::mmd_length},
      {"mmd.temperature", &DetectorConfig::mmd_temperature},
      {"mmd.permutations", &DetectorConfig::mmd_permutations},
      {"mmd.alpha", &DetectorConfig::mmd_alpha},
      {"classifier.train", &DetectorConfig::classifier_train},
      {"classifier.heldout", &DetectorConfig::classifier_heldout},
      {"classifier.length", &DetectorConfig::classifier_length},
      {"classifier.temperature", &DetectorConfig::classifier_temperature},
      {"classifier.threshold", &DetectorConfig::classifier_threshold},
  };
  return keys;
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kInput, std::string("detector config: ") + what);
}

std::vector<TokenSequence> random_prompts(std::size_t count, std::size_t length, std::size_t vocab, Rng& rng) {
  return PromptSet::random(count, length, vocab, rng).prompts();
}

}  // namespace

void DetectorConfig::validate() const {
  require(prompt_length >= 1, "prompt_length must be >= 1");
  require(in_flight >= 1, "in_flight must be >= 1");
  require(identity_queries >= 1, "identity.queries must be >= 1");
  require(identity_temperature > 0.0, "identity.temperature must be > 0");
  require(benchmark_resamples >= 2, "benchmark.resamples must be >= 2");
  require(benchmark_runs >= 1, "benchmark.runs must be >= 1");
  require(benchmark_temperature > 0.0, "benchmark.temperature must be > 0");
  require(benchmark_z_threshold > 0.0, "benchmark.z_threshold must be > 0");
  require(greedy_prompts >= 1, "greedy.prompts must be >= 1");
  require(greedy_max_tokens >= 1, "greedy.max_tokens must be >= 1");
  require(logprob_probes >= 1, "logprob.probes must be >= 1");
  require(logprob_tau_mean >= 0.0 && logprob_tau_max >= 0.0, "logprob thresholds must be >= 0");
  require(subspace_samples == 0 || subspace_samples >= 3, "subspace.samples must be 0 (auto) or >= 3");
  require(subspace_angle_threshold >= 0.0, "subspace.angle_threshold must be >= 0");
  require(mmd_prompts >= 1 && mmd_completions >= 1, "mmd budget must be >= 1 prompt x 1 completion");
  require(mmd_length >= 1, "mmd.length must be >= 1");
  require(mmd_temperature > 0.0, "mmd.temperature must be > 0");
  require(mmd_permutations >= 1, "mmd.permutations must be >= 1");
  require(mmd_alpha > 0.0 && mmd_alpha < 1.0, "mmd.alpha must be in (0, 1)");
  require(classifier_train >= 20, "classifier.train must be >= 20");
  require(classifier_heldout >= 1, "classifier.heldout must be >= 1");
  require(classifier_length >= 1, "classifier.length must be >= 1");
  require(classifier_temperature > 0.0, "classifier.temperature must be > 0");
  require(classifier_hyper.learning_rate > 0.0 && classifier_hyper.iterations >= 1 && classifier_hyper.l2 >= 0.0,
          "classifier hyperparameters out of range");
}

DetectorConfig detector_config_from_json(std::string_view text, const std::filesystem::path& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("detector config: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kSchema, "detector config must be a JSON object");

  DetectorConfig config;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "classifier.learning_rate") {
        config.classifier_hyper.learning_rate = value.get<double>();
        continue;
      }
      if (key == "classifier.iterations") {
        config.classifier_hyper.iterations = value.get<std::size_t>();
        continue;
      }
      if (key == "classifier.l2") {
        config.classifier_hyper.l2 = value.get<double>();
        continue;
      }
      const auto& keys = config_keys();
      auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return key == k.name; });
      if (it == keys.end()) throw Error(ErrorCode::kSchema, "detector config: unknown key '" + key + "'");
      std::visit(
          [&](auto member) {
            using T = std::remove_reference_t<decltype(config.*member)>;
            if constexpr (std::is_same_v<T, std::size_t>) {
              if (!value.is_number_unsigned()) throw Error(ErrorCode::kSchema, key + " must be a non-negative integer");
            }
            config.*member = value.get<T>();
            if constexpr (std::is_same_v<T, std::string>) {
              if (it->path && !(config.*member).empty() && !base_dir.empty()) {
                config.*member = (base_dir / config.*member).lexically_normal().string();
              }
            }
          },
          it->field);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchema, "detector config: " + key + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

DetectorConfig load_detector_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return detector_config_from_json(buffer.str(), path.parent_path());
}

std::string detector_config_to_json(const DetectorConfig& config) {
  nlohmann::ordered_json j;
  for (const auto& k : config_keys()) {
    std::visit([&](auto member) { j[k.name] = config.*member; }, k.field);
  }
  j["classifier.learning_rate"] = config.classifier_hyper.learning_rate;
  j["classifier.iterations"] = config.classifier_hyper.iterations;
  j["classifier.l2"] = config.classifier_hyper.l2;
  return j.dump(2) + "\n";
}

const std::vector<std::string>& detector_names() {
  static const std::vector<std::string> names = {"identity", "benchmark", "greedy",    "logprob",
                                                 "subspace", "mmd",       "classifier"};
  return names;
}

SampleSet collect_samples(CompletionClient& client, const std::string& claimed_name, std::size_t vocab,
                          const std::vector<TokenSequence>& prompts, std::size_t per_prompt,
                          const DecodingParams& params, std::size_t in_flight) {
  std::vector<TokenSequence> completions(prompts.size() * per_prompt);
  parallel_for(completions.size(), in_flight, [&](std::size_t i) {
    CompletionRequest request;
    request.model = claimed_name;
    request.prompt = prompts[i / per_prompt];
    request.max_tokens = params.max_tokens;
    request.greedy = params.greedy;
    if (!params.greedy) request.temperature = params.temperature;
    completions[i] = client.complete(request).tokens;
  });
  SampleSet samples(params.max_tokens, vocab, claimed_name);
  for (std::size_t i = 0; i < completions.size(); ++i) samples.add(prompts[i / per_prompt], completions[i]);
  return samples;
}

SampleSet reference_samples(const ToyModel& model, const std::vector<TokenSequence>& prompts, std::size_t per_prompt,
                            const DecodingParams& params, Rng& rng) {
  SampleSet samples(params.max_tokens, model.vocab(), model.name());
  for (const auto& prompt : prompts) {
    for (std::size_t j = 0; j < per_prompt; ++j) samples.add(prompt, sample_completion(model, prompt, params, rng));
  }
  return samples;
}

std::optional<std::vector<Eigen::VectorXd>> collect_logprob_vectors(CompletionClient& client,
                                                                     const std::string& claimed_name,
                                                                     std::size_t vocab, std::size_t count,
                                                                     std::size_t prompt_length, Rng& rng) {
  std::vector<Eigen::VectorXd> vectors;
  const std::size_t max_attempts = 4 * count + 16;
  for (std::size_t attempt = 0; vectors.size() < count; ++attempt) {
    if (attempt >= max_attempts) {
      throw Error(ErrorCode::kInsufficientSamples, "endpoint keeps ending completions before the first token");
    }
    CompletionRequest request;
    request.model = claimed_name;
    request.prompt = PromptSet::random(1, prompt_length, vocab, rng)[0];
    request.max_tokens = 1;
    request.greedy = true;
    request.logprobs = LogprobPolicy::full();
    const auto response = client.complete(request);
    if (!response.logprobs) return std::nullopt;
    if (response.logprobs->empty()) continue;
    const auto& full = response.logprobs->front().full;
    if (!full) return std::nullopt;
    vectors.push_back(Eigen::Map<const Eigen::VectorXd>(full->data(), static_cast<Eigen::Index>(full->size())));
  }
  return vectors;
}

DetectorVerdict identity_audit(CompletionClient& client, const std::string& claimed_name, const DetectorConfig& config) {
  auto probe = IdentityProbeConfig::defaults_for(claimed_name);
  if (!config.identity_pattern.empty()) probe.patterns = {config.identity_pattern};
  probe.queries = config.identity_queries;
  probe.temperature = config.identity_temperature;
  return identity_probe(client, claimed_name, probe);
}

DetectorVerdict benchmark_audit(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                                const DetectorConfig& config, Rng& rng) {
  if (config.benchmark_suite.empty()) return inapplicable_verdict("benchmark", "no benchmark suite configured");
  const BenchmarkSuite suite = load_suite(config.benchmark_suite);
  suite.validate(reference.vocab());
  if (suite.probes.empty()) return inapplicable_verdict("benchmark", "benchmark suite is empty");
  return run_guarded("benchmark", [&] {
    Rng observed_rng = rng.split(0);
    const auto observed = benchmark_eval(client, claimed_name, suite, config.benchmark_resamples,
                                         config.benchmark_runs, observed_rng, config.benchmark_temperature);
    if (!observed) return inapplicable_verdict("benchmark", "provider discloses no logprobs");
    Rng reference_rng = rng.split(1);
    const auto ref = benchmark_reference(reference, suite, config.benchmark_resamples, reference_rng,
                                         config.benchmark_temperature);
    auto verdict = benchmark_z_test(observed->accuracy.mean, ref.mean, ref.std, observed->temperature_disclosed,
                                    config.benchmark_z_threshold);
    verdict.details["observed_std"] = observed->accuracy.std;
    return verdict;
  });
}

DetectorVerdict greedy_audit(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                             const DetectorConfig& config, Rng& rng) {
  const auto prompts = config.greedy_prompt_file.empty()
                           ? random_prompts(config.greedy_prompts, config.prompt_length, reference.vocab(), rng)
                           : read_prompt_set(config.greedy_prompt_file).prompts();
  return greedy_match(client, claimed_name, reference, prompts, config.greedy_max_tokens);
}

DetectorVerdict logprob_audit(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                              const DetectorConfig& config, Rng& rng) {
  const auto probes = random_prompts(config.logprob_probes, config.prompt_length, reference.vocab(), rng);
  return logprob_compare(client, claimed_name, reference, probes, config.logprob_tau_mean, config.logprob_tau_max);
}

DetectorVerdict subspace_audit(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                               const DetectorConfig& config, Rng& rng) {
  const std::size_t n = config.subspace_samples > 0 ? config.subspace_samples : 4 * reference.hidden();
  return run_guarded("subspace", [&] {
    Rng probe_rng = rng.split(0);
    const auto observed =
        collect_logprob_vectors(client, claimed_name, reference.vocab(), n, config.prompt_length, probe_rng);
    if (!observed) return inapplicable_verdict("subspace", "provider does not disclose full logprob vectors");

    Rng local_rng = rng.split(1);
    std::vector<Eigen::VectorXd> expected;
    expected.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto prompt = PromptSet::random(1, config.prompt_length, reference.vocab(), local_rng)[0];
      expected.push_back(log_softmax(reference.next_logits(prompt).values, 1.0).values);
    }
    const auto sig_ref = subspace_fingerprint(expected, LogitKind::kLogProbabilities);
    const auto sig_obs = subspace_fingerprint(*observed, LogitKind::kLogProbabilities);
    auto verdict = subspace_compare(sig_ref, sig_obs, config.subspace_angle_threshold);
    verdict.details["samples"] = static_cast<double>(n);
    return verdict;
  });
}

DetectorVerdict mmd_audit(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                          const DetectorConfig& config, Rng& rng) {
  return run_guarded("mmd", [&] {
    Rng prompt_rng = rng.split(0);
    const auto prompts = random_prompts(config.mmd_prompts, config.prompt_length, reference.vocab(), prompt_rng);
    const DecodingParams params{config.mmd_temperature, config.mmd_length, false};
    const SampleSet observed = collect_samples(client, claimed_name, reference.vocab(), prompts,
                                               config.mmd_completions, params, config.in_flight);
    Rng reference_rng = rng.split(1);
    const SampleSet expected = reference_samples(reference, prompts, config.mmd_completions, params, reference_rng);
    Rng test_rng = rng.split(2);
    const MmdResult result = permutation_test(expected, observed, config.mmd_permutations, config.mmd_alpha, test_rng);

    DetectorVerdict verdict;
    verdict.detector = "mmd";
    verdict.statistic = result.p_value;
    verdict.threshold = config.mmd_alpha;
    verdict.p_value = result.p_value;
    verdict.details["mmd_squared"] = result.mmd_squared;
    verdict.details["permutations"] = static_cast<double>(result.permutations);
    verdict.details["samples"] = static_cast<double>(observed.size());
    if (result.p_value < config.mmd_alpha) {
      verdict.decision = Decision::kSubstitutionDetected;
      verdict.note = "completion distribution differs from the reference";
    } else {
      verdict.decision = Decision::kHonestConsistent;
    }
    return verdict;
  });
}

DetectorVerdict classifier_audit(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                                 const DetectorConfig& config, Rng& rng) {
  return run_guarded("classifier", [&] {
    const DecodingParams params{config.classifier_temperature, config.classifier_length, false};
    const std::size_t vocab = reference.vocab();
    auto draw = [&](std::uint64_t stream, std::size_t count, bool local) {
      Rng prompt_rng = rng.split(stream);
      const auto prompts = random_prompts(count, config.prompt_length, vocab, prompt_rng);
      if (!local) return collect_samples(client, claimed_name, vocab, prompts, 1, params, config.in_flight);
      Rng sample_rng = rng.split(stream + 100);
      return reference_samples(reference, prompts, 1, params, sample_rng);
    };
    const SampleSet train_ref = draw(0, config.classifier_train, true);
    const SampleSet train_obs = draw(1, config.classifier_train, false);
    const SampleSet held_ref = draw(2, config.classifier_heldout, true);
    const SampleSet held_obs = draw(3, config.classifier_heldout, false);
    const ClassifierModel model = classifier_train(train_ref, train_obs, config.classifier_hyper);
    auto verdict = classifier_verdict(model, held_ref, held_obs, config.classifier_threshold);
    verdict.details["train_per_class"] = static_cast<double>(config.classifier_train);
    verdict.details["heldout_per_class"] = static_cast<double>(config.classifier_heldout);
    return verdict;
  });
}

DetectorVerdict run_detector(std::string_view name, CompletionClient& client, const std::string& claimed_name,
                             const ToyModel& reference, const DetectorConfig& config, Rng& rng) {
  if (name == "identity") return identity_audit(client, claimed_name, config);
  if (name == "benchmark") return benchmark_audit(client, claimed_name, reference, config, rng);
  if (name == "greedy") return greedy_audit(client, claimed_name, reference, config, rng);
  if (name == "logprob") return logprob_audit(client, claimed_name, reference, config, rng);
  if (name == "subspace") return subspace_audit(client, claimed_name, reference, config, rng);
  if (name == "mmd") return mmd_audit(client, claimed_name, reference, config, rng);
  if (name == "classifier") return classifier_audit(client, claimed_name, reference, config, rng);
  throw Error(ErrorCode::kInput, "unknown detector '" + std::string(name) + "'");
}

}  // namespace subaudit
