#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "subaudit/service/protocol.hpp"

namespace httplib {
class Client;
}

namespace subaudit {

class Provider;

/// What the auditor sees of a provider: completions and the model list.
/// Transport failures throw Error(kTransport); API errors throw ApiError.
class CompletionClient {
 public:
  virtual ~CompletionClient() = default;

  CompletionResponse complete(const CompletionRequest& request);
  virtual std::vector<std::string> list_models() = 0;
  [[nodiscard]] virtual std::string describe() const = 0;

  /// Completion requests issued so far.
  [[nodiscard]] std::uint64_t queries() const noexcept { return queries_.load(); }

 protected:
  /// Returns (HTTP status, body) for a serialized request.
  virtual std::pair<int, std::string> post_completion(const std::string& body) = 0;

 private:
  std::atomic<std::uint64_t> queries_{0};
};

/// Client over HTTP; safe to call from several threads (one connection per
/// concurrent caller). The wire observer sees every outgoing request and must
/// itself be thread-safe when used concurrently.
class HttpCompletionClient final : public CompletionClient {
 public:
  using WireObserver = std::function<void(std::string_view path, std::string_view body)>;

  HttpCompletionClient(std::string host, int port, double timeout_seconds = 30.0);
  ~HttpCompletionClient() override;

  std::vector<std::string> list_models() override;
  [[nodiscard]] std::string describe() const override;
  bool healthy();
  void set_wire_observer(WireObserver observer) { observer_ = std::move(observer); }

 protected:
  std::pair<int, std::string> post_completion(const std::string& body) override;

 private:
  std::unique_ptr<httplib::Client> acquire();
  void release(std::unique_ptr<httplib::Client> client);

  std::string host_;
  int port_;
  double timeout_seconds_;
  std::mutex pool_mutex_;
  std::vector<std::unique_ptr<httplib::Client>> idle_;
  WireObserver observer_;
};

/// In-process client that still goes through the JSON wire format.
class LocalCompletionClient final : public CompletionClient {
 public:
  explicit LocalCompletionClient(Provider& provider) : provider_(provider) {}

  std::vector<std::string> list_models() override;
  [[nodiscard]] std::string describe() const override { return "local"; }

 protected:
  std::pair<int, std::string> post_completion(const std::string& body) override;

 private:
  Provider& provider_;
};

/// Parses "host:port" (or "http://host:port"); throws kInput.
std::pair<std::string, int> parse_endpoint(std::string_view endpoint);

}  // namespace subaudit
