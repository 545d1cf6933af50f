#include "dhc/csv.hpp"

#include <cstdio>

namespace dhc {

std::string format_g6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string format_g6(const std::optional<double>& v) {
  return v.has_value() ? format_g6(*v) : std::string();
}

}  // namespace dhc
