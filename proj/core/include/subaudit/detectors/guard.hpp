#pragma once

#include <string>
#include <utility>

#include "subaudit/core/error.hpp"
#include "subaudit/core/report.hpp"
#include "subaudit/service/protocol.hpp"

namespace subaudit {

/// Runs a client-driven detector, turning transport failures and API errors
/// into an inapplicable verdict. Transport failures set
/// details["transport_error"] = 1.
template <typename Fn>
DetectorVerdict run_guarded(const std::string& detector, Fn&& fn) {
  try {
    return std::forward<Fn>(fn)();
  } catch (const ApiError& e) {
    return inapplicable_verdict(detector, std::string("provider error: ") + e.what());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kTransport) throw;
    auto verdict = inapplicable_verdict(detector, e.what());
    verdict.details["transport_error"] = 1.0;
    return verdict;
  }
}

}  // namespace subaudit
