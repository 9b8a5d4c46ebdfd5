#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "subaudit/core/report.hpp"
#include "subaudit/core/rng.hpp"
#include "subaudit/service/client.hpp"
#include "subaudit/toymodel/toy_model.hpp"

namespace subaudit {

/// Multiple-choice probe: the answer is the next token, restricted to four
/// choice ids.
struct BenchmarkProbe {
  TokenSequence context;
  std::array<TokenId, 4> choices{};
  std::size_t gold = 0;

  friend bool operator==(const BenchmarkProbe&, const BenchmarkProbe&) = default;
};

struct AccuracyStats {
  double mean = 0.0;
  double std = 0.0;

  friend bool operator==(const AccuracyStats&, const AccuracyStats&) = default;
};

struct BenchmarkSuite {
  static constexpr std::string_view kSchema = "bench/1";

  std::string name;
  std::vector<BenchmarkProbe> probes;
  /// Calibration results keyed by model name.
  std::map<std::string, AccuracyStats> references;

  /// Throws kSchema on repeated choices, ids >= vocab or gold outside [0, 4).
  void validate(std::size_t vocab) const;

  friend bool operator==(const BenchmarkSuite&, const BenchmarkSuite&) = default;
};

std::string suite_to_json(const BenchmarkSuite& suite);
BenchmarkSuite suite_from_json(std::string_view text);
void save_suite(const BenchmarkSuite& suite, const std::filesystem::path& path);
BenchmarkSuite load_suite(const std::filesystem::path& path);

/// R draws from exp(logprobs) renormalized over the four choices. Throws
/// kInput when every entry is -inf (or R == 0).
std::vector<std::size_t> choice_resample(const std::array<double, 4>& choice_logprobs, std::size_t resamples, Rng& rng);

/// Log-probabilities of the four choices at temperature T, renormalized over
/// the choices.
std::array<double, 4> choice_logprobs(const ToyModel& model, const BenchmarkProbe& probe, double temperature);

/// Accuracy mean and sample std over `resamples` resampling runs, given the
/// per-probe choice log-probabilities.
AccuracyStats resampled_accuracy(const std::vector<BenchmarkProbe>& probes,
                                 const std::vector<std::array<double, 4>>& logprobs, std::size_t resamples, Rng& rng);

struct BenchmarkObservation {
  AccuracyStats accuracy;
  /// Every response reported the temperature it was decoded at.
  bool temperature_disclosed = true;
};

inline constexpr double kBenchmarkTemperature = 0.5;

/// Queries each probe `runs` times as a constrained single-token completion
/// (allowed_tokens = choices, top-4 logprobs) and averages the choice
/// probabilities across runs before resampling. Returns nullopt when the
/// provider discloses no logprobs.
std::optional<BenchmarkObservation> benchmark_eval(CompletionClient& client, const std::string& claimed_name,
                                                   const BenchmarkSuite& suite, std::size_t resamples,
                                                   std::size_t runs, Rng& rng,
                                                   double temperature = kBenchmarkTemperature);

/// The same statistic computed from a local model.
AccuracyStats benchmark_reference(const ToyModel& model, const BenchmarkSuite& suite, std::size_t resamples,
                                  Rng& rng, double temperature = kBenchmarkTemperature);

inline constexpr double kDefaultZThreshold = 3.0;

/// statistic = |observed - reference| / reference_std; > threshold convicts,
/// unless the temperature was not disclosed, in which case the verdict is
/// inconclusive. Throws kInput when reference_std <= 0.
DetectorVerdict benchmark_z_test(double observed_mean, double reference_mean, double reference_std,
                                 bool temperature_disclosed, double threshold = kDefaultZThreshold);

}  // namespace subaudit
