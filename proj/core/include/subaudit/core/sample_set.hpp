#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "subaudit/core/rng.hpp"
#include "subaudit/core/tokens.hpp"

namespace subaudit {

struct DecodingParams {
  double temperature = 1.0;
  std::size_t max_tokens = 50;
  bool greedy = false;

  /// Throws kInput on a non-positive temperature (when sampling) or max_tokens == 0.
  void validate() const;
};

/// Prompts with a sampling distribution over them (uniform by default).
class PromptSet {
 public:
  PromptSet() = default;
  explicit PromptSet(std::vector<TokenSequence> prompts);
  PromptSet(std::vector<TokenSequence> prompts, std::vector<double> weights);

  /// `count` prompts of the form [BOS, x_1..x_len] with x_i uniform over the
  /// content tokens of a `vocab`-sized vocabulary.
  static PromptSet random(std::size_t count, std::size_t length, std::size_t vocab, Rng& rng);

  [[nodiscard]] const std::vector<TokenSequence>& prompts() const noexcept { return prompts_; }
  [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }
  [[nodiscard]] std::size_t size() const noexcept { return prompts_.size(); }
  [[nodiscard]] const TokenSequence& operator[](std::size_t i) const { return prompts_[i]; }

  const TokenSequence& draw(Rng& rng) const;

 private:
  std::vector<TokenSequence> prompts_;
  std::vector<double> weights_;
};

struct SampleGroup {
  TokenSequence prompt;
  std::vector<TokenSequence> completions;

  friend bool operator==(const SampleGroup&, const SampleGroup&) = default;
};

/// Fixed-length completions grouped by prompt, in order of first appearance.
class SampleSet {
 public:
  SampleSet(std::size_t length, std::size_t vocab, std::string source = {});

  /// Pads `completion` to length(); throws kLengthOverflow or kInput.
  void add(const TokenSequence& prompt, const TokenSequence& completion);

  [[nodiscard]] std::size_t length() const noexcept { return length_; }
  [[nodiscard]] std::size_t vocab() const noexcept { return vocab_; }
  [[nodiscard]] const std::string& source() const noexcept { return source_; }
  [[nodiscard]] const std::vector<SampleGroup>& groups() const noexcept { return groups_; }
  /// Total number of completions across groups.
  [[nodiscard]] std::size_t size() const noexcept { return count_; }
  [[nodiscard]] bool empty() const noexcept { return count_ == 0; }
  /// All completions flattened in group order.
  [[nodiscard]] std::vector<TokenSequence> completions() const;

  friend bool operator==(const SampleSet&, const SampleSet&) = default;

 private:
  std::size_t length_;
  std::size_t vocab_;
  std::string source_;
  std::vector<SampleGroup> groups_;
  std::size_t count_ = 0;
};

/// Line-delimited sample-set file: a header line {"L","vocab","source"}
/// followed by one {"prompt":[..],"tokens":[..]} record per completion.
SampleSet read_sample_set(const std::filesystem::path& path);
void write_sample_set(const SampleSet& samples, const std::filesystem::path& path);

/// {"schema":"prompts/1","prompts":[[ids]..],"weights":[..]?}; weights are
/// written only when non-uniform.
void write_prompt_set(const PromptSet& prompts, const std::filesystem::path& path);
PromptSet read_prompt_set(const std::filesystem::path& path);

}  // namespace subaudit
