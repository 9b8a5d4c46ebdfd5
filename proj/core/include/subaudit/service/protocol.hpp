#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "subaudit/adversary/policy.hpp"
#include "subaudit/core/tokens.hpp"

namespace subaudit {

/// Body of POST /v1/completions.
///
/// {"model":str, "prompt":[ids], "max_tokens":int, "temperature":float?,
///  "greedy":bool?, "logprobs":int|"full"?, "allowed_tokens":[ids]?, "id":str?}
struct CompletionRequest {
  std::string model;
  TokenSequence prompt;
  std::size_t max_tokens = 16;
  std::optional<double> temperature;
  bool greedy = false;
  /// Requested disclosure; None when the field is absent.
  LogprobPolicy logprobs;
  /// Constrained query: decode only over these ids.
  std::vector<TokenId> allowed_tokens;
  std::optional<std::string> id;
};

struct CompletionResponse {
  std::string id;
  std::string model;
  TokenSequence tokens;
  std::string text;
  std::string finish_reason;  ///< "eos" or "length"
  double temperature = 1.0;   ///< echo of the client-requested value
  /// Temperature actually used, when the provider discloses it.
  std::optional<double> effective_temperature;
  std::optional<std::vector<PositionLogprobs>> logprobs;
};

/// Structured API error: {"error":{"code":..,"message":..}}.
class ApiError : public std::runtime_error {
 public:
  ApiError(std::string code, const std::string& message, int http_status);

  [[nodiscard]] const std::string& code() const noexcept { return code_; }
  [[nodiscard]] int http_status() const noexcept { return http_status_; }

 private:
  std::string code_;
  int http_status_;
};

inline constexpr std::string_view kInvalidRequest = "invalid_request";
inline constexpr std::string_view kModelNotFound = "model_not_found";

std::string request_to_json(const CompletionRequest& request);
/// Throws ApiError(invalid_request) on malformed bodies.
CompletionRequest request_from_json(std::string_view body);

std::string response_to_json(const CompletionResponse& response);
CompletionResponse response_from_json(std::string_view body);

std::string error_to_json(const ApiError& error);
/// Rebuilds an ApiError from an error body; falls back to a generic one.
ApiError error_from_json(std::string_view body, int http_status);

std::string models_to_json(const std::vector<std::string>& names);
std::vector<std::string> models_from_json(std::string_view body);

}  // namespace subaudit
