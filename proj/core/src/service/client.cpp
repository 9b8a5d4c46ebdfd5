#include "subaudit/service/client.hpp"

#include <charconv>

#include <httplib.h>

#include "subaudit/core/error.hpp"
#include "subaudit/service/provider.hpp"

namespace subaudit {

CompletionResponse CompletionClient::complete(const CompletionRequest& request) {
  queries_.fetch_add(1);
  auto [status, body] = post_completion(request_to_json(request));
  if (status != 200) throw error_from_json(body, status);
  return response_from_json(body);
}

HttpCompletionClient::HttpCompletionClient(std::string host, int port, double timeout_seconds)
    : host_(std::move(host)), port_(port), timeout_seconds_(timeout_seconds) {}

HttpCompletionClient::~HttpCompletionClient() = default;

std::unique_ptr<httplib::Client> HttpCompletionClient::acquire() {
  {
    std::lock_guard lock(pool_mutex_);
    if (!idle_.empty()) {
      auto c = std::move(idle_.back());
      idle_.pop_back();
      return c;
    }
  }
  auto c = std::make_unique<httplib::Client>(host_, port_);
  const auto seconds = static_cast<time_t>(timeout_seconds_);
  const auto micros = static_cast<time_t>((timeout_seconds_ - static_cast<double>(seconds)) * 1e6);
  c->set_connection_timeout(seconds, micros);
  c->set_read_timeout(seconds, micros);
  c->set_write_timeout(seconds, micros);
  c->set_keep_alive(true);
  c->set_tcp_nodelay(true);
  return c;
}

void HttpCompletionClient::release(std::unique_ptr<httplib::Client> client) {
  std::lock_guard lock(pool_mutex_);
  idle_.push_back(std::move(client));
}

std::string HttpCompletionClient::describe() const { return host_ + ":" + std::to_string(port_); }

std::pair<int, std::string> HttpCompletionClient::post_completion(const std::string& body) {
  if (observer_) observer_("/v1/completions", body);
  auto client = acquire();
  auto res = client->Post("/v1/completions", body, "application/json");
  release(std::move(client));
  if (!res) {
    throw Error(ErrorCode::kTransport, "POST /v1/completions to " + describe() + " failed: " + httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

std::vector<std::string> HttpCompletionClient::list_models() {
  if (observer_) observer_("/v1/models", "");
  auto client = acquire();
  auto res = client->Get("/v1/models");
  release(std::move(client));
  if (!res) throw Error(ErrorCode::kTransport, "GET /v1/models from " + describe() + " failed");
  if (res->status != 200) throw error_from_json(res->body, res->status);
  return models_from_json(res->body);
}

bool HttpCompletionClient::healthy() {
  auto client = acquire();
  auto res = client->Get("/healthz");
  release(std::move(client));
  return res && res->status == 200 && res->body == "ok";
}

std::pair<int, std::string> LocalCompletionClient::post_completion(const std::string& body) {
  return provider_.handle_completion_json(body);
}

std::vector<std::string> LocalCompletionClient::list_models() { return provider_.list_models(); }

std::pair<std::string, int> parse_endpoint(std::string_view endpoint) {
  std::string_view rest = endpoint;
  if (rest.starts_with("http://")) rest.remove_prefix(7);
  while (rest.ends_with('/')) rest.remove_suffix(1);
  const auto colon = rest.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(ErrorCode::kInput, "endpoint must look like host:port, got '" + std::string(endpoint) + "'");
  }
  int port = 0;
  const std::string_view port_text = rest.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port <= 0 || port > 65535) {
    throw Error(ErrorCode::kInput, "invalid port in endpoint '" + std::string(endpoint) + "'");
  }
  return {std::string(rest.substr(0, colon)), port};
}

}  // namespace subaudit
