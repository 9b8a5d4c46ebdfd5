#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <ostream>
#include <thread>

#include "subaudit/cli/commands.hpp"
#include "subaudit/core/error.hpp"
#include "subaudit/service/provider.hpp"
#include "subaudit/service/server.hpp"

namespace subaudit::cli {

namespace {

std::atomic<bool> g_signalled{false};

extern "C" void on_signal(int) { g_signalled.store(true); }

}  // namespace

int cmd_serve(const ServeOptions& options, Console console, std::function<bool()> should_stop) {
  std::shared_ptr<Provider> provider;
  try {
    provider = std::make_shared<Provider>(load_provider_config(options.config), options.seed);
  } catch (const std::exception& e) {
    *console.err << "serve: bad provider config: " << e.what() << '\n';
    return kExitUsage;
  }

  ProviderServer server(provider);
  int port = 0;
  try {
    port = server.bind(options.host, options.port);
  } catch (const std::exception& e) {
    *console.err << "serve: " << e.what() << '\n';
    return kExitUsage;
  }
  const auto& policy = provider->config().policy;
  *console.err << "serve: listening on " << options.host << ':' << port << " as '" << provider->config().claimed_name
               << "' (mode " << mode_name(policy.mode) << ", logprobs " << provider->config().logprobs.to_string()
               << ")\n";
  if (options.port_file) {
    std::ofstream pf(*options.port_file, std::ios::trunc);
    pf << port << '\n';
  }

  g_signalled.store(false);
  auto previous_int = std::signal(SIGINT, on_signal);
  auto previous_term = std::signal(SIGTERM, on_signal);
  server.start();
  while (!g_signalled.load() && !(should_stop && should_stop())) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  server.stop();
  std::signal(SIGINT, previous_int);
  std::signal(SIGTERM, previous_term);
  *console.err << "serve: stopped after " << provider->requests_served() << " requests\n";
  return kExitOk;
}

}  // namespace subaudit::cli
