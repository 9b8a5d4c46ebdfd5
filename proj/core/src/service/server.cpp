#include "subaudit/service/server.hpp"

#include <httplib.h>

#include "subaudit/core/error.hpp"

namespace subaudit {

namespace {
constexpr const char* kJson = "application/json";
}

ProviderServer::ProviderServer(std::shared_ptr<Provider> provider)
    : provider_(std::move(provider)), server_(std::make_unique<httplib::Server>()) {
  server_->set_tcp_nodelay(true);
  server_->Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });
  server_->Get("/v1/models", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(models_to_json(provider_->list_models()), kJson);
  });
  server_->Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
    auto [status, body] = provider_->handle_completion_json(req.body);
    res.status = status;
    res.set_content(body, kJson);
  });
}

ProviderServer::~ProviderServer() { stop(); }

int ProviderServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  return port_;
}

void ProviderServer::start() {
  if (port_ < 0) throw Error(ErrorCode::kIo, "bind() before start()");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void ProviderServer::run() {
  if (port_ < 0) throw Error(ErrorCode::kIo, "bind() before run()");
  server_->listen_after_bind();
}

void ProviderServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace subaudit
