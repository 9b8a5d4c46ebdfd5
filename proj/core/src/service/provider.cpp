#include "subaudit/service/provider.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "subaudit/core/error.hpp"

namespace subaudit {

using ojson = nlohmann::ordered_json;

const std::vector<IdentityTemplate>& identity_templates() {
  static const std::vector<IdentityTemplate> templates = {
      {"who-are-you", {3, 5, 7, 4}},
      {"who-developed-you", {3, 6, 7, 4}},
  };
  return templates;
}

TokenSequence identity_prompt(const IdentityTemplate& t) {
  TokenSequence prompt{kBos};
  prompt.insert(prompt.end(), t.tokens.begin(), t.tokens.end());
  return prompt;
}

void ProviderConfig::validate() const {
  if (!spec) throw Error(ErrorCode::kInput, "provider needs a spec model");
  policy.validate();
  if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma)) {
    throw Error(ErrorCode::kInput, "jitter sigma must be non-negative");
  }
  if (logprobs.kind == LogprobPolicy::Kind::kTopK && logprobs.k > spec->vocab()) {
    throw Error(ErrorCode::kInput, "top-k disclosure larger than the vocabulary");
  }
  if (const ModelHandle alt = policy.alt_model(); alt && alt->vocab() != spec->vocab()) {
    throw Error(ErrorCode::kInput, "substitute model has a different vocabulary");
  }
}

namespace {

ojson parse_document(std::string_view text) {
  try {
    return ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
}

ModelHandle load_relative(const ojson& j, const char* field, const std::filesystem::path& base_dir) {
  if (!j.contains(field) || !j[field].is_string()) {
    throw Error(ErrorCode::kSchema, std::string("missing model path '") + field + "'");
  }
  std::filesystem::path p = j[field].get<std::string>();
  if (p.is_relative()) p = base_dir / p;
  return std::make_shared<const ToyModel>(load_model(p));
}

EvasionRegistry parse_registry(const ojson& j) {
  EvasionRegistry registry;
  if (j.is_null()) return registry;
  if (j.contains("hashes")) {
    for (const auto& h : j["hashes"]) registry.add_digest(digest_from_hex(h.get<std::string>()));
  }
  if (j.contains("templates")) {
    for (const auto& t : j["templates"]) registry.add_template(t.get<TokenSequence>());
  }
  return registry;
}

}  // namespace

ProviderConfig provider_config_from_json(std::string_view text, const std::filesystem::path& base_dir) {
  const ojson j = parse_document(text);
  if (!j.is_object() || j.value("schema", std::string{}) != ProviderConfig::kSchema) {
    throw Error(ErrorCode::kSchema, "expected schema provider/1");
  }
  try {
    ProviderConfig config;
    config.claimed_name = j.at("claimed_name").get<std::string>();
    config.spec = load_relative(j, "spec_model", base_dir);
    config.logprobs = LogprobPolicy::parse(j.value("logprobs", std::string("none")));
    config.jitter_sigma = j.value("jitter_sigma", 0.0);
    config.disclose_temperature = j.value("disclose_temperature", true);
    if (j.contains("identity_override") && !j["identity_override"].is_null()) {
      config.policy.identity_override = j["identity_override"].get<std::string>();
    }
    if (j.contains("temperature_override") && !j["temperature_override"].is_null()) {
      config.policy.temperature_override = j["temperature_override"].get<double>();
    }

    const ojson& mode = j.at("mode");
    const std::string kind = mode.at("kind").get<std::string>();
    if (kind == "honest") {
      config.policy.mode = attack::Honest{};
    } else if (kind == "fixed_substitute") {
      config.policy.mode = attack::FixedSubstitute{load_relative(mode, "alt_model", base_dir)};
    } else if (kind == "quantized") {
      const double step = mode.at("step").get<double>();
      if (!(step > 0.0)) throw Error(ErrorCode::kSchema, "quantization step must be positive");
      config.policy.mode = attack::Quantized{step, std::make_shared<const ToyModel>(quantize(*config.spec, step))};
    } else if (kind == "mixture") {
      config.policy.mode = attack::Mixture{mode.at("rate").get<double>(), load_relative(mode, "alt_model", base_dir)};
    } else if (kind == "benchmark_evasion") {
      auto registry = std::make_shared<const EvasionRegistry>(parse_registry(j.value("evasion", ojson(nullptr))));
      config.policy.mode = attack::BenchmarkEvasion{std::move(registry), load_relative(mode, "alt_model", base_dir)};
    } else {
      throw Error(ErrorCode::kSchema, "unknown attack mode '" + kind + "'");
    }
    config.validate();
    return config;
  } catch (const ojson::exception& e) {
    throw Error(ErrorCode::kSchema, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInput) throw Error(ErrorCode::kSchema, e.what());
    throw;
  }
}

ProviderConfig load_provider_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return provider_config_from_json(buf.str(), path.parent_path());
}

Provider::Provider(ProviderConfig config, std::uint64_t server_seed)
    : config_(std::move(config)), server_seed_(server_seed) {
  config_.validate();
}

const ToyModel& Provider::backend_model(Backend backend) const {
  if (backend == Backend::kAlt) return *config_.policy.alt_model();
  return *config_.spec;
}

CompletionResponse Provider::handle_completion(const CompletionRequest& request) {
  if (config_.claimed_name.empty() || request.model != config_.claimed_name) {
    throw ApiError(std::string(kModelNotFound), "model '" + request.model + "' is not served here", 404);
  }
  const std::size_t vocab = config_.spec->vocab();
  if (request.prompt.empty()) throw ApiError(std::string(kInvalidRequest), "prompt must be nonempty", 400);
  for (TokenId t : request.prompt) {
    if (t >= vocab) throw ApiError(std::string(kInvalidRequest), "prompt token outside vocabulary", 400);
  }
  for (TokenId t : request.allowed_tokens) {
    if (t >= vocab || t == kBos || t == kPad) {
      throw ApiError(std::string(kInvalidRequest), "allowed_tokens must be emittable ids", 400);
    }
  }
  if (request.max_tokens < 1 || request.max_tokens > config_.max_tokens_limit) {
    throw ApiError(std::string(kInvalidRequest), "max_tokens out of range", 400);
  }

  DecodingParams requested;
  requested.temperature = request.temperature.value_or(1.0);
  requested.max_tokens = request.max_tokens;
  requested.greedy = request.greedy;

  const std::uint64_t index = counter_.fetch_add(1);
  const Rng root(server_seed_, index);
  Rng route_rng = root.split(0);
  Rng sample_rng = root.split(1);
  Rng jitter_rng = root.split(2);

  const Route routed = route(config_.policy, request.prompt, requested, route_rng);
  const ToyModel& model = backend_model(routed.backend);
  const bool identity_request =
      std::any_of(identity_templates().begin(), identity_templates().end(),
                  [&](const IdentityTemplate& t) { return contains_subsequence(request.prompt, t.tokens); });
  {
    std::lock_guard lock(log_mutex_);
    log_.push_back(RoutingRecord{index, routed.backend, routed.evasion_hit, identity_request});
  }

  CompletionResponse response;
  response.id = request.id.value_or("cmpl-" + std::to_string(index));
  response.model = config_.claimed_name;
  response.temperature = requested.temperature;
  if (config_.disclose_temperature && !config_.policy.temperature_override) {
    response.effective_temperature = routed.effective.temperature;
  }
  const LogprobPolicy disclosure = restrict_policy(config_.logprobs, request.logprobs);

  if (identity_request) {
    response.text = apply_identity_override(config_.policy, render_identity_answer(model.identity()));
    response.finish_reason = "eos";
    response.logprobs = apply_logprob_policy({}, {}, disclosure);
    return response;
  }

  DecodeOptions options;
  options.jitter_sigma = config_.jitter_sigma;
  options.jitter_rng = &jitter_rng;
  options.record_logprobs = disclosure.kind != LogprobPolicy::Kind::kNone;
  options.allowed_tokens = request.allowed_tokens;
  DecodeTrace trace = decode(model, request.prompt, routed.effective, sample_rng, options);

  response.text = render_tokens(trace.tokens);
  response.finish_reason = trace.stopped_at_eos ? "eos" : "length";
  response.logprobs = apply_logprob_policy(trace.logprobs, trace.tokens, disclosure);
  response.tokens = std::move(trace.tokens);
  return response;
}

std::pair<int, std::string> Provider::handle_completion_json(std::string_view body) {
  try {
    return {200, response_to_json(handle_completion(request_from_json(body)))};
  } catch (const ApiError& e) {
    return {e.http_status(), error_to_json(e)};
  }
}

std::vector<std::string> Provider::list_models() const {
  if (config_.claimed_name.empty()) return {};
  return {config_.claimed_name};
}

std::vector<RoutingRecord> Provider::routing_log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

}  // namespace subaudit
