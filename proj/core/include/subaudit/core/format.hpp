#pragma once

#include <string>

namespace subaudit {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

}  // namespace subaudit
