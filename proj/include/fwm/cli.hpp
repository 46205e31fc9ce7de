#pragma once

// Command-line front end: simulate, correlate, fit, od-fit, metrics, report,
// sequence. Exit codes are stable:
//   0 success, 2 validation (bad config, arguments, out-of-order data),
//   3 I/O, 4 corrupt or malformed input data, 5 fit did not converge.
// FWM_LOG_LEVEL (trace, debug, info, warn, error, off) sets log verbosity.

#include <iosfwd>

namespace fwm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitCorrupt = 4;
inline constexpr int kExitNoConvergence = 5;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fwm::cli
