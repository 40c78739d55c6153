#pragma once

#include <cstdio>
#include <string>

namespace shallow {

/// Shortest-safe decimal used in every CSV and manifest: 17 significant digits.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace shallow
