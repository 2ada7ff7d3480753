#pragma once

#include <cstdio>
#include <string>

namespace ratiocast {

// All floats in emitted CSV files carry 17 significant digits so that a
// rerun with the same seed produces byte-identical output and doubles
// round-trip exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace ratiocast
