#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "thinserve/interference.hpp"
#include "thinserve/profile.hpp"
#include "thinserve/simulator.hpp"
#include "thinserve/trace.hpp"

namespace thinserve::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kInputError = 3,
  kInfeasible = 4,
};

// Everything a subcommand needs, filled from flags and an optional
// key=value config file (flags win).
struct RunConfig {
  std::string subcommand;
  std::string profile_path;
  std::string out_path;
  std::uint64_t seed = 42;

  // optimize / gap
  int threads = 0;
  std::vector<int> batches;
  bool strict_threads = false;

  // simulate
  std::string trace_path;
  TraceGenerator generator;
  std::string topology = "1x16";
  std::string timeline_path;
  double batch_timeout_ms = 100.0;
  double reconfig_timeout_ms = 5000.0;
  double startup_delay_ms = 2500.0;
  double scale_down_delay_ms = 2500.0;
  SimulationOptions simulation;

  // interference (simulate / gap)
  std::string interference = "none";
  std::string curve_path;
  DownclockModel downclock;
  double bandwidth_per_instance_gbps = 3.0;

  // grid
  int batch_exponent = 10;
  std::string synth_out;
  SyntheticProfileSpec synth;
};

// Parses argv and runs the selected subcommand. Never throws; failures are
// reported on `err` and mapped to an ExitCode.
int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

}  // namespace thinserve::cli
