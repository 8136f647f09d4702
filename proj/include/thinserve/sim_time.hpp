#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>

namespace thinserve {

// Simulated time: integer microseconds since the start of a run.
using SimTime = std::chrono::microseconds;

inline SimTime from_ms(double ms) {
  return SimTime(static_cast<std::int64_t>(std::llround(ms * 1000.0)));
}

inline double to_ms(SimTime t) { return static_cast<double>(t.count()) / 1e3; }

}  // namespace thinserve
