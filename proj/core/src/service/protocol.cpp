#include "subaudit/service/protocol.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "subaudit/core/error.hpp"

namespace subaudit {

using ojson = nlohmann::ordered_json;

ApiError::ApiError(std::string code, const std::string& message, int http_status)
    : std::runtime_error(code + ": " + message), code_(std::move(code)), http_status_(http_status) {}

namespace {

[[noreturn]] void invalid(const std::string& message) { throw ApiError(std::string(kInvalidRequest), message, 400); }

TokenSequence token_list(const ojson& j, const char* field) {
  if (!j.is_array()) invalid(std::string("'") + field + "' must be an array of token ids");
  TokenSequence out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() > std::numeric_limits<TokenId>::max()) {
      invalid(std::string("'") + field + "' must hold non-negative token ids");
    }
    out.push_back(v.get<TokenId>());
  }
  return out;
}

ojson finite_or_null(double x) { return std::isfinite(x) ? ojson(x) : ojson(nullptr); }

double number_or_neg_inf(const ojson& j) {
  return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

std::string request_to_json(const CompletionRequest& request) {
  ojson j;
  j["model"] = request.model;
  j["prompt"] = request.prompt;
  j["max_tokens"] = request.max_tokens;
  if (request.temperature) j["temperature"] = *request.temperature;
  if (request.greedy) j["greedy"] = true;
  switch (request.logprobs.kind) {
    case LogprobPolicy::Kind::kNone: break;
    case LogprobPolicy::Kind::kTopK: j["logprobs"] = request.logprobs.k; break;
    case LogprobPolicy::Kind::kFull: j["logprobs"] = "full"; break;
  }
  if (!request.allowed_tokens.empty()) j["allowed_tokens"] = request.allowed_tokens;
  if (request.id) j["id"] = *request.id;
  return j.dump();
}

CompletionRequest request_from_json(std::string_view body) {
  ojson j;
  try {
    j = ojson::parse(body);
  } catch (const ojson::parse_error& e) {
    invalid(std::string("body is not JSON: ") + e.what());
  }
  if (!j.is_object()) invalid("body must be a JSON object");

  CompletionRequest r;
  if (!j.contains("model") || !j["model"].is_string()) invalid("'model' is required");
  r.model = j["model"].get<std::string>();
  if (!j.contains("prompt")) invalid("'prompt' is required");
  r.prompt = token_list(j["prompt"], "prompt");
  if (r.prompt.empty()) invalid("'prompt' must be nonempty");
  if (j.contains("max_tokens")) {
    if (!j["max_tokens"].is_number_unsigned() || j["max_tokens"].get<std::uint64_t>() < 1) {
      invalid("'max_tokens' must be a positive integer");
    }
    r.max_tokens = j["max_tokens"].get<std::size_t>();
  }
  if (j.contains("temperature") && !j["temperature"].is_null()) {
    if (!j["temperature"].is_number()) invalid("'temperature' must be a number");
    r.temperature = j["temperature"].get<double>();
    if (!(*r.temperature > 0.0) || !std::isfinite(*r.temperature)) invalid("'temperature' must be positive");
  }
  if (j.contains("greedy")) {
    if (!j["greedy"].is_boolean()) invalid("'greedy' must be a boolean");
    r.greedy = j["greedy"].get<bool>();
  }
  if (j.contains("logprobs") && !j["logprobs"].is_null()) {
    const auto& lp = j["logprobs"];
    if (lp.is_string() && lp.get<std::string>() == "full") {
      r.logprobs = LogprobPolicy::full();
    } else if (lp.is_number_unsigned() && lp.get<std::uint64_t>() >= 1) {
      r.logprobs = LogprobPolicy::top_k(lp.get<std::size_t>());
    } else {
      invalid("'logprobs' must be a positive integer or \"full\"");
    }
  }
  if (j.contains("allowed_tokens") && !j["allowed_tokens"].is_null()) {
    r.allowed_tokens = token_list(j["allowed_tokens"], "allowed_tokens");
  }
  if (j.contains("id") && !j["id"].is_null()) {
    if (!j["id"].is_string()) invalid("'id' must be a string");
    r.id = j["id"].get<std::string>();
  }
  return r;
}

std::string response_to_json(const CompletionResponse& response) {
  ojson j;
  j["id"] = response.id;
  j["object"] = "text_completion";
  j["model"] = response.model;
  j["tokens"] = response.tokens;
  j["text"] = response.text;
  j["finish_reason"] = response.finish_reason;
  j["temperature"] = response.temperature;
  j["effective_temperature"] =
      response.effective_temperature ? ojson(*response.effective_temperature) : ojson(nullptr);
  if (response.logprobs) {
    ojson lp;
    ojson tokens = ojson::array();
    ojson chosen = ojson::array();
    ojson top = ojson::array();
    ojson full = ojson::array();
    bool has_top = false;
    bool has_full = false;
    for (const auto& pos : *response.logprobs) {
      tokens.push_back(pos.token);
      chosen.push_back(finite_or_null(pos.logprob));
      ojson entries = ojson::array();
      for (const auto& e : pos.top) {
        ojson item;
        item["id"] = e.token;
        item["logprob"] = finite_or_null(e.logprob);
        entries.push_back(std::move(item));
      }
      has_top = has_top || !pos.top.empty();
      top.push_back(std::move(entries));
      if (pos.full) {
        has_full = true;
        ojson row = ojson::array();
        for (double x : *pos.full) row.push_back(finite_or_null(x));
        full.push_back(std::move(row));
      }
    }
    lp["tokens"] = std::move(tokens);
    lp["token_logprobs"] = std::move(chosen);
    if (has_top) lp["top_logprobs"] = std::move(top);
    if (has_full) lp["full"] = std::move(full);
    j["logprobs"] = std::move(lp);
  }
  return j.dump();
}

CompletionResponse response_from_json(std::string_view body) {
  ojson j;
  try {
    j = ojson::parse(body);
  } catch (const ojson::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("response is not JSON: ") + e.what());
  }
  try {
    CompletionResponse r;
    r.id = j.at("id").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.tokens = j.at("tokens").get<TokenSequence>();
    r.text = j.at("text").get<std::string>();
    r.finish_reason = j.at("finish_reason").get<std::string>();
    r.temperature = j.at("temperature").get<double>();
    if (j.contains("effective_temperature") && !j["effective_temperature"].is_null()) {
      r.effective_temperature = j["effective_temperature"].get<double>();
    }
    if (j.contains("logprobs") && !j["logprobs"].is_null()) {
      const auto& lp = j["logprobs"];
      const auto& tokens = lp.at("tokens");
      const auto& chosen = lp.at("token_logprobs");
      std::vector<PositionLogprobs> positions(tokens.size());
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        positions[i].token = tokens[i].get<TokenId>();
        positions[i].logprob = number_or_neg_inf(chosen.at(i));
        if (lp.contains("top_logprobs")) {
          for (const auto& e : lp["top_logprobs"].at(i)) {
            positions[i].top.push_back(TopLogprob{e.at("id").get<TokenId>(), number_or_neg_inf(e.at("logprob"))});
          }
        }
        if (lp.contains("full")) {
          std::vector<double> row;
          for (const auto& x : lp["full"].at(i)) row.push_back(number_or_neg_inf(x));
          positions[i].full = std::move(row);
        }
      }
      r.logprobs = std::move(positions);
    }
    return r;
  } catch (const ojson::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed completion response: ") + e.what());
  }
}

std::string error_to_json(const ApiError& error) {
  ojson j;
  j["error"]["code"] = error.code();
  std::string message = error.what();
  const std::string prefix = error.code() + ": ";
  if (message.starts_with(prefix)) message.erase(0, prefix.size());
  j["error"]["message"] = message;
  return j.dump();
}

ApiError error_from_json(std::string_view body, int http_status) {
  try {
    const ojson j = ojson::parse(body);
    return ApiError(j.at("error").at("code").get<std::string>(), j.at("error").at("message").get<std::string>(),
                    http_status);
  } catch (const ojson::exception&) {
    return ApiError("http_" + std::to_string(http_status), std::string(body), http_status);
  }
}

std::string models_to_json(const std::vector<std::string>& names) {
  ojson j;
  j["data"] = ojson::array();
  for (const auto& n : names) {
    ojson entry;
    entry["id"] = n;
    j["data"].push_back(std::move(entry));
  }
  return j.dump();
}

std::vector<std::string> models_from_json(std::string_view body) {
  try {
    const ojson j = ojson::parse(body);
    std::vector<std::string> names;
    for (const auto& entry : j.at("data")) names.push_back(entry.at("id").get<std::string>());
    return names;
  } catch (const ojson::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed model list: ") + e.what());
  }
}

}  // namespace subaudit
