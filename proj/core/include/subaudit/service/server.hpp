#pragma once

#include <memory>
#include <string>
#include <thread>

#include "subaudit/service/provider.hpp"

namespace httplib {
class Server;
}

namespace subaudit {

/// HTTP front end for a Provider:
///   POST /v1/completions, GET /v1/models, GET /healthz.
class ProviderServer {
 public:
  explicit ProviderServer(std::shared_ptr<Provider> provider);
  ~ProviderServer();
  ProviderServer(const ProviderServer&) = delete;
  ProviderServer& operator=(const ProviderServer&) = delete;

  /// Binds to host:port (port 0 picks a free port) and returns the bound
  /// port. Throws kIo on failure.
  int bind(const std::string& host, int port);
  /// Serves on a background thread until stop().
  void start();
  /// Serves on the calling thread until stop() from another thread.
  void run();
  void stop();

  [[nodiscard]] int port() const noexcept { return port_; }
  [[nodiscard]] Provider& provider() noexcept { return *provider_; }

 private:
  std::shared_ptr<Provider> provider_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace subaudit
