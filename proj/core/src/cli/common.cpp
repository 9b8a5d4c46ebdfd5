#include <iostream>

#include "subaudit/cli/commands.hpp"
#include "subaudit/core/error.hpp"

namespace subaudit::cli {

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e); err && err->code() == ErrorCode::kTransport) {
    return kExitTransport;
  }
  return kExitUsage;
}

Console default_console(bool verbose) { return Console{&std::cout, &std::cerr, verbose}; }

}  // namespace subaudit::cli
