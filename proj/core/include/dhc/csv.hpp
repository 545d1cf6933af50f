#pragma once

#include <optional>
#include <string>

namespace dhc {

// Floating-point CSV cell: up to 6 significant digits, trailing zeros
// trimmed, so logs diff cleanly across reruns.
std::string format_g6(double v);

// Missing values render as empty cells.
std::string format_g6(const std::optional<double>& v);

}  // namespace dhc
