#pragma once

#include <string>

namespace fwm {

// Shortest round-trip decimal representation ("%.17g" without the noise).
std::string format_double(double value);

// Fixed-point with `decimals` digits, rounding half away from zero on the
// shortest decimal form, so 2.65 -> "2.7" even though the binary value is
// slightly below 2.65.
std::string format_fixed(double value, int decimals);

}  // namespace fwm
