// Shared constants and error types.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace timebin {

inline constexpr double kSpeedOfLight = 299792458.0; // m/s
inline constexpr double kPi = 3.14159265358979323846;

/// Invalid or inconsistent user configuration. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A run produced too few counts for the requested analysis. CLI exit code 3.
struct InsufficientStatsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Wrap an angle to (-pi, pi].
inline double wrap_phase(double x) {
  x = std::fmod(x, 2.0 * kPi);
  if (x <= -kPi) x += 2.0 * kPi;
  if (x > kPi) x -= 2.0 * kPi;
  return x;
}

} // namespace timebin
