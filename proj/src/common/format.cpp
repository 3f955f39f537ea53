#include "ccgm/common/format.hpp"

#include <cstdio>

namespace ccgm {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace ccgm
