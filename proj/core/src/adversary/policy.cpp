#include "subaudit/adversary/policy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <type_traits>

#include <openssl/evp.h>

#include "subaudit/core/error.hpp"

namespace subaudit {

std::vector<std::uint8_t> canonical_prompt_bytes(std::span<const TokenId> prompt) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(prompt.size() * 4);
  for (TokenId t : prompt) {
    const auto value = static_cast<std::uint32_t>(t);
    for (int shift = 0; shift < 32; shift += 8) bytes.push_back(static_cast<std::uint8_t>((value >> shift) & 0xFFu));
  }
  return bytes;
}

Digest prompt_digest(std::span<const TokenId> prompt) {
  const std::vector<std::uint8_t> bytes = canonical_prompt_bytes(prompt);
  Digest digest{};
  unsigned int size = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &size, EVP_sha256(), nullptr) != 1 ||
      size != digest.size()) {
    throw Error(ErrorCode::kInput, "SHA-256 digest failed");
  }
  return digest;
}

std::string digest_to_hex(const Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint8_t b : digest) {
    out += kHex[b >> 4];
    out += kHex[b & 0xF];
  }
  return out;
}

Digest digest_from_hex(std::string_view hex) {
  if (hex.size() != 64) throw Error(ErrorCode::kParse, "digest must be 64 hex characters");
  Digest digest{};
  for (std::size_t i = 0; i < digest.size(); ++i) {
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(hex.data() + 2 * i, hex.data() + 2 * i + 2, value, 16);
    if (ec != std::errc{} || ptr != hex.data() + 2 * i + 2) {
      throw Error(ErrorCode::kParse, "invalid hex digest '" + std::string(hex) + "'");
    }
    digest[i] = static_cast<std::uint8_t>(value);
  }
  return digest;
}

bool EvasionRegistry::add_prompt(std::span<const TokenId> prompt) { return add_digest(prompt_digest(prompt)); }

bool EvasionRegistry::add_digest(const Digest& digest) { return digests_.insert(digest).second; }

void EvasionRegistry::add_template(TokenSequence pattern) {
  if (pattern.empty()) throw Error(ErrorCode::kInput, "evasion template must be nonempty");
  templates_.push_back(std::move(pattern));
}

bool evasion_match(std::span<const TokenId> prompt, const EvasionRegistry& registry) {
  if (registry.digests().contains(prompt_digest(prompt))) return true;
  return std::any_of(registry.templates().begin(), registry.templates().end(),
                     [&](const TokenSequence& t) { return contains_subsequence(prompt, t); });
}

std::string_view mode_name(const AttackMode& mode) {
  struct Visitor {
    std::string_view operator()(const attack::Honest&) const { return "honest"; }
    std::string_view operator()(const attack::FixedSubstitute&) const { return "fixed_substitute"; }
    std::string_view operator()(const attack::Quantized&) const { return "quantized"; }
    std::string_view operator()(const attack::Mixture&) const { return "mixture"; }
    std::string_view operator()(const attack::BenchmarkEvasion&) const { return "benchmark_evasion"; }
  };
  return std::visit(Visitor{}, mode);
}

void AttackPolicy::validate() const {
  struct Visitor {
    void operator()(const attack::Honest&) const {}
    void operator()(const attack::FixedSubstitute& m) const {
      if (!m.alt) throw Error(ErrorCode::kInput, "fixed substitution needs an alt model");
    }
    void operator()(const attack::Quantized& m) const {
      if (!(m.step > 0.0)) throw Error(ErrorCode::kInput, "quantization step must be positive");
      if (!m.alt) throw Error(ErrorCode::kInput, "quantized mode needs its quantized model");
    }
    void operator()(const attack::Mixture& m) const {
      if (!(m.substitution_rate >= 0.0 && m.substitution_rate <= 1.0)) {
        throw Error(ErrorCode::kInput, "substitution rate must lie in [0, 1]");
      }
      if (!m.alt) throw Error(ErrorCode::kInput, "mixture needs an alt model");
    }
    void operator()(const attack::BenchmarkEvasion& m) const {
      if (!m.registry) throw Error(ErrorCode::kInput, "benchmark evasion needs a registry");
      if (!m.alt) throw Error(ErrorCode::kInput, "benchmark evasion needs an alt model");
    }
  };
  std::visit(Visitor{}, mode);
  if (temperature_override && !(*temperature_override > 0.0 && std::isfinite(*temperature_override))) {
    throw Error(ErrorCode::kInput, "temperature override must be positive");
  }
}

ModelHandle AttackPolicy::alt_model() const {
  return std::visit(
      [](const auto& m) -> ModelHandle {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, attack::Honest>) {
          return nullptr;
        } else {
          return m.alt;
        }
      },
      mode);
}

Route route(const AttackPolicy& policy, std::span<const TokenId> prompt, const DecodingParams& requested, Rng& rng) {
  Route r;
  r.effective = requested;
  if (policy.temperature_override) r.effective.temperature = *policy.temperature_override;

  struct Visitor {
    Route& r;
    std::span<const TokenId> prompt;
    Rng& rng;
    void operator()(const attack::Honest&) const { r.backend = Backend::kSpec; }
    void operator()(const attack::FixedSubstitute&) const { r.backend = Backend::kAlt; }
    void operator()(const attack::Quantized&) const { r.backend = Backend::kAlt; }
    void operator()(const attack::Mixture& m) const {
      r.backend = rng.uniform() < m.substitution_rate ? Backend::kAlt : Backend::kSpec;
    }
    void operator()(const attack::BenchmarkEvasion& m) const {
      r.evasion_hit = evasion_match(prompt, *m.registry);
      r.backend = r.evasion_hit ? Backend::kSpec : Backend::kAlt;
    }
  };
  std::visit(Visitor{r, prompt, rng}, policy.mode);
  return r;
}

LogprobPolicy LogprobPolicy::parse(std::string_view text) {
  if (text == "none") return none();
  if (text == "full") return full();
  constexpr std::string_view prefix = "topk:";
  if (text.starts_with(prefix)) {
    std::size_t k = 0;
    const char* begin = text.data() + prefix.size();
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, k);
    if (ec == std::errc{} && ptr == end && k >= 1) return top_k(k);
  }
  throw Error(ErrorCode::kParse, "logprob policy must be none, topk:<k>=1..> or full, got '" + std::string(text) + "'");
}

std::string LogprobPolicy::to_string() const {
  switch (kind) {
    case Kind::kNone: return "none";
    case Kind::kTopK: return "topk:" + std::to_string(k);
    case Kind::kFull: return "full";
  }
  return "none";
}

LogprobPolicy restrict_policy(const LogprobPolicy& a, const LogprobPolicy& b) {
  using Kind = LogprobPolicy::Kind;
  if (a.kind == Kind::kNone || b.kind == Kind::kNone) return LogprobPolicy::none();
  if (a.kind == Kind::kFull) return b;
  if (b.kind == Kind::kFull) return a;
  return LogprobPolicy::top_k(std::min(a.k, b.k));
}

std::optional<std::vector<PositionLogprobs>> apply_logprob_policy(const std::vector<Eigen::VectorXd>& logprobs,
                                                                  std::span<const TokenId> chosen,
                                                                  const LogprobPolicy& policy) {
  using Kind = LogprobPolicy::Kind;
  if (policy.kind == Kind::kNone) return std::nullopt;
  if (logprobs.size() != chosen.size()) throw Error(ErrorCode::kInput, "logprob vectors must align with tokens");

  std::vector<PositionLogprobs> out;
  out.reserve(chosen.size());
  std::vector<TokenId> order;
  for (std::size_t pos = 0; pos < chosen.size(); ++pos) {
    const Eigen::VectorXd& vec = logprobs[pos];
    PositionLogprobs entry;
    entry.token = chosen[pos];
    entry.logprob = vec[chosen[pos]];
    if (policy.kind == Kind::kTopK) {
      order.clear();
      for (Eigen::Index i = 0; i < vec.size(); ++i) {
        if (std::isfinite(vec[i])) order.push_back(static_cast<TokenId>(i));
      }
      const std::size_t k = std::min(policy.k, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](TokenId a, TokenId b) { return vec[a] > vec[b] || (vec[a] == vec[b] && a < b); });
      for (std::size_t i = 0; i < k; ++i) entry.top.push_back(TopLogprob{order[i], vec[order[i]]});
    } else {
      entry.full = std::vector<double>(vec.data(), vec.data() + vec.size());
    }
    out.push_back(std::move(entry));
  }
  return out;
}

std::string render_identity_answer(std::string_view identity) {
  return "I am " + std::string(identity) + ", an AI assistant.";
}

std::string apply_identity_override(const AttackPolicy& policy, std::string response) {
  if (!policy.identity_override) return response;
  return render_identity_answer(*policy.identity_override);
}

}  // namespace subaudit
