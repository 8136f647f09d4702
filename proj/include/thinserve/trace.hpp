#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "thinserve/sim_time.hpp"

namespace thinserve {

// Request arrival times, sorted ascending.
using ArrivalTrace = std::vector<SimTime>;

// Evenly spaced arrivals at `rate_rps`, switching to `step_rate_rps` at
// `step_at_s`. Each arrival is displaced by a uniform offset of up to
// +/- jitter/2 of its inter-arrival interval, so ordering is preserved for
// jitter < 1.
struct TraceGenerator {
  double rate_rps = 100.0;
  double duration_s = 10.0;
  std::optional<double> step_at_s;
  double step_rate_rps = 0.0;
  double jitter = 0.2;
  std::uint64_t seed = 42;
};

// Throws ValidationError for non-positive rates or duration, or jitter
// outside [0, 1).
ArrivalTrace generate_trace(const TraceGenerator& generator);

// CSV with header `timestamp_ms`, one request per row. Throws ParseError on
// malformed rows and ValidationError when timestamps decrease or are negative.
ArrivalTrace parse_trace(std::istream& in);
ArrivalTrace load_trace(const std::filesystem::path& path);
void write_trace(std::ostream& out, const ArrivalTrace& trace);

}  // namespace thinserve
