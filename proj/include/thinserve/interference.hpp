#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "thinserve/optimizer.hpp"
#include "thinserve/profile.hpp"

namespace thinserve {

// Frequency license drop when enough cores run wide SIMD at once.
struct DownclockModel {
  double base_freq_ghz = 2.6;
  double loaded_freq_ghz = 2.2;
  // Fraction of cores that must be busy with SIMD work for the drop to apply.
  double activation_threshold = 0.5;

  double factor(double simd_fraction) const;
};

// Piecewise-linear access-latency multiplier as a function of memory
// bandwidth load (GB/s). Starts at (0, 1.0); multipliers never decrease.
// Loads past the last point take the last multiplier.
class MemoryLatencyCurve {
 public:
  using Point = std::pair<double, double>;

  // Throws ValidationError when the points are unsorted, non-monotone, or do
  // not start at (0, 1.0).
  explicit MemoryLatencyCurve(std::vector<Point> points);

  // Flat through moderate load, steep near saturation.
  static MemoryLatencyCurve default_curve();

  double multiplier(double bandwidth_gbps) const;
  const std::vector<Point>& points() const { return points_; }

 private:
  std::vector<Point> points_;
};

// CSV with header `bandwidth_gbps,latency_multiplier`.
MemoryLatencyCurve parse_memory_curve(std::istream& in);
MemoryLatencyCurve load_memory_curve(const std::filesystem::path& path);

enum class InterferenceKind { kNone, kDownclock, kMemory, kBoth };

// Throws ParseError for anything but none|downclock|memory|both.
InterferenceKind parse_interference_kind(std::string_view name);

struct InterferenceModel {
  std::optional<DownclockModel> downclock;
  std::optional<MemoryLatencyCurve> memory;

  static InterferenceModel make(
      InterferenceKind kind, DownclockModel downclock = {},
      MemoryLatencyCurve curve = MemoryLatencyCurve::default_curve());
};

struct InterferenceContext {
  int active_instances = 1;
  double per_instance_bandwidth_gbps = 3.0;
  double simd_fraction = 0.0;
};

// downclock factor x memory factor at the bandwidth of the other instances.
// Exactly 1 for a lone instance.
double penalty(const InterferenceModel& model,
               const InterferenceContext& context);

// A uniform per-key penalty for apply_penalty().
LatencyPenalty make_latency_penalty(const InterferenceModel& model,
                                    const InterferenceContext& context);

struct GapReport {
  double expected_ms = 0.0;
  double adjusted_ms = 0.0;
  double gap_fraction = 0.0;
  double factor = 1.0;
};

// Compares the isolated-profile objective of `config` with the objective
// under concurrent interference. All instances in the configuration run
// together; the SIMD fraction is the share of T the configuration occupies.
GapReport gap_report(const ProfileTable& profile, const Configuration& config,
                     const InterferenceModel& model,
                     double per_instance_bandwidth_gbps = 3.0);

}  // namespace thinserve
