#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "subaudit/adversary/policy.hpp"
#include "subaudit/service/protocol.hpp"
#include "subaudit/toymodel/toy_model.hpp"

namespace subaudit {

/// Identity-eliciting prompt templates compiled into the service. A request
/// whose prompt contains one of these runs is answered from the identity
/// channel instead of the language model.
struct IdentityTemplate {
  std::string label;
  TokenSequence tokens;
};
const std::vector<IdentityTemplate>& identity_templates();
/// [BOS] followed by the template tokens.
TokenSequence identity_prompt(const IdentityTemplate& t);

struct ProviderConfig {
  static constexpr std::string_view kSchema = "provider/1";

  /// Advertised model name; empty means the provider lists no models.
  std::string claimed_name;
  ModelHandle spec;
  AttackPolicy policy;
  LogprobPolicy logprobs = LogprobPolicy::none();
  double jitter_sigma = 0.0;
  /// Report the temperature actually used. Ignored (never disclosed) while a
  /// temperature override is active.
  bool disclose_temperature = true;
  /// Upper bound on max_tokens per request.
  std::size_t max_tokens_limit = 1024;

  void validate() const;
};

/// Loads a provider/1 document; model paths resolve against the file's
/// directory. Quantized mode builds its substitute here. Throws kParse or
/// kSchema on malformed input.
ProviderConfig load_provider_config(const std::filesystem::path& path);
ProviderConfig provider_config_from_json(std::string_view text, const std::filesystem::path& base_dir);

struct RoutingRecord {
  std::uint64_t request_index = 0;
  Backend backend = Backend::kSpec;
  bool evasion_hit = false;
  bool identity_request = false;
};

/// The black-box provider. Configuration is read-only after construction;
/// each request gets generator streams derived from (server seed, request
/// counter), so concurrent handling never shares a generator.
class Provider {
 public:
  Provider(ProviderConfig config, std::uint64_t server_seed);

  /// Throws ApiError (model_not_found / invalid_request).
  CompletionResponse handle_completion(const CompletionRequest& request);
  /// Full JSON round trip: returns (HTTP status, body).
  std::pair<int, std::string> handle_completion_json(std::string_view body);

  [[nodiscard]] std::vector<std::string> list_models() const;
  [[nodiscard]] const ProviderConfig& config() const noexcept { return config_; }
  /// Server-side log of routing decisions; never exposed over the wire.
  [[nodiscard]] std::vector<RoutingRecord> routing_log() const;
  [[nodiscard]] std::uint64_t requests_served() const noexcept { return counter_.load(); }

 private:
  const ToyModel& backend_model(Backend backend) const;

  ProviderConfig config_;
  std::uint64_t server_seed_;
  std::atomic<std::uint64_t> counter_{0};
  mutable std::mutex log_mutex_;
  std::vector<RoutingRecord> log_;
};

}  // namespace subaudit
