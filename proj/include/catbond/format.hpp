#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace catbond {

// Fixed text form for report cells; "NA" for NaN.
inline std::string format_number(double v, int significant = 10) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", significant, v);
  return buf;
}

}  // namespace catbond
