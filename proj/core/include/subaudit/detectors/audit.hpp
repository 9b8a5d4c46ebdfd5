#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "subaudit/core/report.hpp"
#include "subaudit/core/rng.hpp"
#include "subaudit/core/sample_set.hpp"
#include "subaudit/detectors/classifier.hpp"
#include "subaudit/detectors/subspace.hpp"
#include "subaudit/service/client.hpp"
#include "subaudit/toymodel/toy_model.hpp"

namespace subaudit {

/// Thresholds and budgets for the client-driven detectors. Serialized as a
/// flat JSON object whose keys are "<detector>.<field>" (see kConfigKeys in
/// audit.cpp); absent keys keep these defaults, unknown keys are rejected.
///
/// Minimum budgets enforced by validate():
///   identity.queries >= 1          benchmark.resamples >= 2, benchmark.runs >= 1
///   greedy.prompts >= 1            logprob.probes >= 1
///   subspace.samples == 0 or >= 3  mmd.prompts, mmd.completions, mmd.permutations >= 1
///   classifier.train >= 20         classifier.heldout >= 1
struct DetectorConfig {
  std::size_t prompt_length = 8;
  /// Concurrent requests while collecting samples; 1 = sequential.
  std::size_t in_flight = 1;

  std::size_t identity_queries = 20;
  double identity_temperature = 0.6;
  /// Empty: the claimed name's family prefix.
  std::string identity_pattern;

  std::string benchmark_suite;
  std::size_t benchmark_resamples = 100;
  std::size_t benchmark_runs = 1;
  double benchmark_temperature = 0.5;
  double benchmark_z_threshold = 3.0;

  std::size_t greedy_prompts = 25;
  std::size_t greedy_max_tokens = 50;
  /// Optional prompts/1 file used instead of random prompts.
  std::string greedy_prompt_file;

  std::size_t logprob_probes = 25;
  double logprob_tau_mean = 1e-2;
  double logprob_tau_max = 5e-2;

  /// 0: four times the reference hidden size.
  std::size_t subspace_samples = 0;
  double subspace_angle_threshold = 0.05;

  std::size_t mmd_prompts = 25;
  std::size_t mmd_completions = 10;
  std::size_t mmd_length = 50;
  double mmd_temperature = 1.0;
  std::size_t mmd_permutations = 1000;
  double mmd_alpha = 0.05;

  std::size_t classifier_train = 500;
  std::size_t classifier_heldout = 200;
  std::size_t classifier_length = 50;
  double classifier_temperature = 0.6;
  double classifier_threshold = 0.6;
  ClassifierHyper classifier_hyper;

  /// Throws kInput naming the first budget below its minimum.
  void validate() const;
};

/// Parses the flat key-value document; relative paths resolve against
/// `base_dir`. Throws kParse / kSchema.
DetectorConfig detector_config_from_json(std::string_view text, const std::filesystem::path& base_dir = {});
DetectorConfig load_detector_config(const std::filesystem::path& path);
std::string detector_config_to_json(const DetectorConfig& config);

/// Detector names in canonical order.
const std::vector<std::string>& detector_names();

/// Completions for `per_prompt` requests on each prompt, padded to the
/// decoding length. Up to `in_flight` requests run concurrently; results are
/// stored by request index.
SampleSet collect_samples(CompletionClient& client, const std::string& claimed_name, std::size_t vocab,
                          const std::vector<TokenSequence>& prompts, std::size_t per_prompt,
                          const DecodingParams& params, std::size_t in_flight = 1);

/// The same sampling run against a local model.
SampleSet reference_samples(const ToyModel& model, const std::vector<TokenSequence>& prompts, std::size_t per_prompt,
                            const DecodingParams& params, Rng& rng);

/// Full next-token log-probability vectors for `count` random prompts (greedy,
/// one token). Prompts whose completion ends immediately are replaced.
/// nullopt when the provider does not disclose full vectors.
std::optional<std::vector<Eigen::VectorXd>> collect_logprob_vectors(CompletionClient& client,
                                                                     const std::string& claimed_name,
                                                                     std::size_t vocab, std::size_t count,
                                                                     std::size_t prompt_length, Rng& rng);

DetectorVerdict identity_audit(CompletionClient& client, const std::string& claimed_name, const DetectorConfig& config);
DetectorVerdict benchmark_audit(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                                const DetectorConfig& config, Rng& rng);
DetectorVerdict greedy_audit(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                             const DetectorConfig& config, Rng& rng);
DetectorVerdict logprob_audit(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                              const DetectorConfig& config, Rng& rng);
/// Compares the endpoint's fingerprint with one computed locally from the
/// reference on the same prompts. Inapplicable without full disclosure.
DetectorVerdict subspace_audit(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                               const DetectorConfig& config, Rng& rng);
/// Permutation MMD test between endpoint completions and local reference
/// completions on fresh random prompts. statistic = p-value, convicts when
/// p < alpha.
DetectorVerdict mmd_audit(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                          const DetectorConfig& config, Rng& rng);
/// Trains reference-vs-endpoint on one completion per fresh prompt and
/// reports held-out balanced accuracy.
DetectorVerdict classifier_audit(CompletionClient& client, const std::string& claimed_name, const ToyModel& reference,
                                 const DetectorConfig& config, Rng& rng);

/// Dispatches by detector name; throws kInput for unknown names.
DetectorVerdict run_detector(std::string_view name, CompletionClient& client, const std::string& claimed_name,
                             const ToyModel& reference, const DetectorConfig& config, Rng& rng);

}  // namespace subaudit
