#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "subaudit/core/rng.hpp"
#include "subaudit/core/sample_set.hpp"
#include "subaudit/core/tokens.hpp"
#include "subaudit/toymodel/toy_model.hpp"

namespace subaudit {

using Digest = std::array<std::uint8_t, 32>;

/// Canonical prompt bytes: each id as 4 little-endian bytes, concatenated.
std::vector<std::uint8_t> canonical_prompt_bytes(std::span<const TokenId> prompt);
/// SHA-256 of the canonical prompt bytes.
Digest prompt_digest(std::span<const TokenId> prompt);
std::string digest_to_hex(const Digest& digest);
/// Throws kParse on anything but 64 hex characters.
Digest digest_from_hex(std::string_view hex);

/// Audit-query recognizer used by the benchmark-evasion attack.
class EvasionRegistry {
 public:
  /// Registers the digest of `prompt`; returns false if it was already present.
  bool add_prompt(std::span<const TokenId> prompt);
  bool add_digest(const Digest& digest);
  void add_template(TokenSequence pattern);

  [[nodiscard]] const std::set<Digest>& digests() const noexcept { return digests_; }
  [[nodiscard]] const std::vector<TokenSequence>& templates() const noexcept { return templates_; }
  [[nodiscard]] bool empty() const noexcept { return digests_.empty() && templates_.empty(); }

 private:
  std::set<Digest> digests_;
  std::vector<TokenSequence> templates_;
};

/// True iff the prompt's digest is registered or any template occurs in it as
/// a contiguous token run.
bool evasion_match(std::span<const TokenId> prompt, const EvasionRegistry& registry);

using ModelHandle = std::shared_ptr<const ToyModel>;

namespace attack {
struct Honest {};
struct FixedSubstitute {
  ModelHandle alt;
};
/// alt is quantize(spec, step), built once at load time.
struct Quantized {
  double step = 0.0;
  ModelHandle alt;
};
struct Mixture {
  double substitution_rate = 0.0;
  ModelHandle alt;
};
struct BenchmarkEvasion {
  std::shared_ptr<const EvasionRegistry> registry;
  ModelHandle alt;
};
}  // namespace attack

using AttackMode =
    std::variant<attack::Honest, attack::FixedSubstitute, attack::Quantized, attack::Mixture, attack::BenchmarkEvasion>;

std::string_view mode_name(const AttackMode& mode);

struct AttackPolicy {
  AttackMode mode = attack::Honest{};
  std::optional<std::string> identity_override;
  std::optional<double> temperature_override;

  /// Throws kInput on an out-of-range rate or step, a missing alt model, or
  /// an evasion mode without a registry.
  void validate() const;
  /// The substitute model, or null for Honest.
  [[nodiscard]] ModelHandle alt_model() const;
};

enum class Backend { kSpec, kAlt };

struct Route {
  Backend backend = Backend::kSpec;
  DecodingParams effective;
  bool evasion_hit = false;
};

/// Picks the serving backend and the decoding parameters actually used.
/// Mixture consumes exactly one uniform draw from `rng`; other modes none.
Route route(const AttackPolicy& policy, std::span<const TokenId> prompt, const DecodingParams& requested, Rng& rng);

/// Provider-side logprob disclosure level.
struct LogprobPolicy {
  enum class Kind { kNone, kTopK, kFull };
  Kind kind = Kind::kNone;
  std::size_t k = 0;

  static LogprobPolicy none() { return {}; }
  static LogprobPolicy top_k(std::size_t k) { return {Kind::kTopK, k}; }
  static LogprobPolicy full() { return {Kind::kFull, 0}; }

  /// "none", "topk:<k>" or "full".
  static LogprobPolicy parse(std::string_view text);
  [[nodiscard]] std::string to_string() const;

  friend bool operator==(const LogprobPolicy&, const LogprobPolicy&) = default;
};

/// The more restrictive of two policies (None < TopK(small k) < TopK(large k) < Full).
LogprobPolicy restrict_policy(const LogprobPolicy& a, const LogprobPolicy& b);

struct TopLogprob {
  TokenId token = 0;
  double logprob = 0.0;

  friend bool operator==(const TopLogprob&, const TopLogprob&) = default;
};

struct PositionLogprobs {
  TokenId token = 0;
  double logprob = 0.0;              ///< chosen-token log-probability
  std::vector<TopLogprob> top;       ///< TopK: k best, descending, ties by id
  std::optional<std::vector<double>> full;  ///< Full: the whole vector (-inf kept)
};

/// Filters per-position log-probability vectors down to what `policy` lets the
/// client see; nullopt for None.
std::optional<std::vector<PositionLogprobs>> apply_logprob_policy(const std::vector<Eigen::VectorXd>& logprobs,
                                                                  std::span<const TokenId> chosen,
                                                                  const LogprobPolicy& policy);

/// Text of an identity answer naming `identity`.
std::string render_identity_answer(std::string_view identity);

/// Replaces a backend identity answer with one rendered from the override.
std::string apply_identity_override(const AttackPolicy& policy, std::string response);

}  // namespace subaudit
