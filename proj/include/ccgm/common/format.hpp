#pragma once

#include <string>

namespace ccgm {

// %.17g, enough digits to round-trip any double.
std::string format_double(double v);

}  // namespace ccgm
