#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "subaudit/core/rng.hpp"
#include "subaudit/core/sample_set.hpp"
#include "subaudit/core/tokens.hpp"

namespace subaudit {

enum class LogitKind { kRawLogits, kLogProbabilities };

struct LogitVector {
  Eigen::VectorXd values;
  LogitKind kind = LogitKind::kRawLogits;
};

/// Synthetic autoregressive model with a tanh recurrence:
///
///   h_0 = 0,  h_t = tanh(W_h h_{t-1} + E_in[x_t]),  logits = E_out h_T
///
/// There is no output bias, so every logit vector lies in col(E_out), a
/// d-dimensional subspace of R^v. Immutable once constructed.
class ToyModel {
 public:
  /// Smallest admissible singular value of E_out.
  static constexpr double kRankTolerance = 1e-8;
  static constexpr int kMaxRankRetries = 8;

  /// Draws every entry i.i.d. from N(0, 1/sqrt(d)) (variance). E_in uses
  /// stream 0, W_h stream 1 and E_out stream 2 (+k on the k-th rank retry).
  static ToyModel create(std::size_t vocab, std::size_t hidden, std::uint64_t seed, std::string name,
                         std::string identity);

  /// Validates shapes, finiteness and the rank of E_out (kConstruction).
  ToyModel(std::string name, std::string identity, std::uint64_t seed, Eigen::MatrixXd input_embeddings,
           Eigen::MatrixXd recurrence, Eigen::MatrixXd output_embeddings);

  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] const std::string& identity() const noexcept { return identity_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::size_t vocab() const noexcept { return static_cast<std::size_t>(output_.rows()); }
  [[nodiscard]] std::size_t hidden() const noexcept { return static_cast<std::size_t>(output_.cols()); }
  [[nodiscard]] const Eigen::MatrixXd& input_embeddings() const noexcept { return input_; }
  [[nodiscard]] const Eigen::MatrixXd& recurrence() const noexcept { return recurrence_; }
  [[nodiscard]] const Eigen::MatrixXd& output_embeddings() const noexcept { return output_; }

  [[nodiscard]] Eigen::VectorXd initial_state() const { return Eigen::VectorXd::Zero(recurrence_.rows()); }
  /// One recurrence step; throws kInput for an out-of-vocabulary token.
  [[nodiscard]] Eigen::VectorXd advance(const Eigen::VectorXd& state, TokenId token) const;
  [[nodiscard]] Eigen::VectorXd logits(const Eigen::VectorXd& state) const { return output_ * state; }
  /// Hidden state after consuming `context` from h_0.
  [[nodiscard]] Eigen::VectorXd encode(std::span<const TokenId> context) const;

  /// Raw logits after `context` (nonempty).
  [[nodiscard]] LogitVector next_logits(std::span<const TokenId> context) const;

  friend bool operator==(const ToyModel& a, const ToyModel& b);

 private:
  std::string name_;
  std::string identity_;
  std::uint64_t seed_;
  Eigen::MatrixXd input_;       // v x d
  Eigen::MatrixXd recurrence_;  // d x d
  Eigen::MatrixXd output_;      // v x d
};

/// values = logits/T - logsumexp(logits/T), computed with max subtraction.
LogitVector log_softmax(const Eigen::VectorXd& logits, double temperature);

/// logits + N(0, sigma^2) per entry; sigma = 0 returns the input unchanged
/// without consuming draws.
Eigen::VectorXd jitter_logits(const Eigen::VectorXd& logits, double sigma, Rng& rng);

struct DecodeOptions {
  /// Std-dev of Gaussian noise added to raw logits before softmax. 0 disables.
  double jitter_sigma = 0.0;
  /// Source of jitter noise; required when jitter_sigma > 0. Kept separate
  /// from the sampling generator so that sigma = 0 leaves sampling untouched.
  Rng* jitter_rng = nullptr;
  /// Record one log-probability vector per emitted token.
  bool record_logprobs = false;
  /// Restrict decoding to these ids (constrained query). Empty = every
  /// non-reserved id (everything except BOS and PAD).
  std::vector<TokenId> allowed_tokens;
};

struct DecodeTrace {
  TokenSequence tokens;  ///< emitted tokens, EOS excluded
  bool stopped_at_eos = false;
  /// Per emitted token: log-probabilities at the effective temperature (T=1
  /// for greedy). Unconstrained decoding reports the full-vocabulary
  /// distribution; constrained decoding renormalizes over the allowed ids and
  /// leaves -inf elsewhere.
  std::vector<Eigen::VectorXd> logprobs;
};

/// Autoregressive decoding. Sampling draws from softmax(logits/T) restricted
/// to the emittable ids; greedy takes the argmax with smallest-id tie-break.
DecodeTrace decode(const ToyModel& model, std::span<const TokenId> prompt, const DecodingParams& params,
                   Rng& rng, const DecodeOptions& options = {});

TokenSequence sample_completion(const ToyModel& model, std::span<const TokenId> prompt,
                                const DecodingParams& params, Rng& rng);

/// Rounds every weight to step * round(w / step), ties to even.
ToyModel quantize(const ToyModel& model, double step);

struct TokenLogprob {
  double chosen = 0.0;
  LogitVector distribution;
};

/// Teacher-forced scoring of `completion` after `prompt`.
std::vector<TokenLogprob> token_logprobs(const ToyModel& model, std::span<const TokenId> prompt,
                                         std::span<const TokenId> completion, double temperature);

std::string model_to_json(const ToyModel& model);
ToyModel model_from_json(std::string_view text);
void save_model(const ToyModel& model, const std::filesystem::path& path);
ToyModel load_model(const std::filesystem::path& path);

}  // namespace subaudit
