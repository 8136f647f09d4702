#include "thinserve/interference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "thinserve/errors.hpp"

namespace thinserve {

double DownclockModel::factor(double simd_fraction) const {
  if (simd_fraction < activation_threshold) return 1.0;
  return base_freq_ghz / loaded_freq_ghz;
}

MemoryLatencyCurve::MemoryLatencyCurve(std::vector<Point> points)
    : points_(std::move(points)) {
  if (points_.empty() || points_.front().first != 0.0 ||
      points_.front().second != 1.0) {
    throw ValidationError("memory curve must start at (0, 1.0)");
  }
  for (std::size_t k = 1; k < points_.size(); ++k) {
    if (!(points_[k].first > points_[k - 1].first)) {
      throw ValidationError("memory curve bandwidths must strictly increase");
    }
    if (!(points_[k].second >= points_[k - 1].second) ||
        !std::isfinite(points_[k].second)) {
      throw ValidationError("memory curve multipliers must not decrease");
    }
  }
}

MemoryLatencyCurve MemoryLatencyCurve::default_curve() {
  return MemoryLatencyCurve({{0.0, 1.00},
                             {10.0, 1.00},
                             {20.0, 1.02},
                             {40.0, 1.09},
                             {60.0, 1.27},
                             {80.0, 1.65},
                             {100.0, 2.60}});
}

double MemoryLatencyCurve::multiplier(double bandwidth_gbps) const {
  if (bandwidth_gbps <= 0.0) return points_.front().second;
  const auto upper = std::upper_bound(
      points_.begin(), points_.end(), bandwidth_gbps,
      [](double bw, const Point& p) { return bw < p.first; });
  if (upper == points_.end()) return points_.back().second;
  const auto& [x1, y1] = *upper;
  const auto& [x0, y0] = *std::prev(upper);
  return y0 + (y1 - y0) * (bandwidth_gbps - x0) / (x1 - x0);
}

MemoryLatencyCurve parse_memory_curve(std::istream& in) {
  std::vector<MemoryLatencyCurve::Point> points;
  std::string line;
  bool saw_header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!saw_header) {
      if (line != "bandwidth_gbps,latency_multiplier") {
        throw ParseError(
            "expected header `bandwidth_gbps,latency_multiplier`");
      }
      saw_header = true;
      continue;
    }
    std::istringstream row(line);
    double bw = 0.0;
    double mult = 0.0;
    char comma = 0;
    if (!(row >> bw >> comma >> mult) || comma != ',' ||
        !(row >> std::ws).eof()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": malformed curve row");
    }
    points.emplace_back(bw, mult);
  }
  if (!saw_header) throw ParseError("memory curve is missing its header");
  return MemoryLatencyCurve(std::move(points));
}

MemoryLatencyCurve load_memory_curve(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open memory curve " + path.string());
  return parse_memory_curve(in);
}

InterferenceKind parse_interference_kind(std::string_view name) {
  if (name == "none") return InterferenceKind::kNone;
  if (name == "downclock") return InterferenceKind::kDownclock;
  if (name == "memory") return InterferenceKind::kMemory;
  if (name == "both") return InterferenceKind::kBoth;
  throw ParseError("unknown interference model `" + std::string(name) +
                   "` (expected none|downclock|memory|both)");
}

InterferenceModel InterferenceModel::make(InterferenceKind kind,
                                          DownclockModel downclock,
                                          MemoryLatencyCurve curve) {
  if (!(downclock.loaded_freq_ghz > 0.0) ||
      downclock.loaded_freq_ghz > downclock.base_freq_ghz) {
    throw ValidationError("loaded frequency must lie in (0, base frequency]");
  }
  InterferenceModel model;
  if (kind == InterferenceKind::kDownclock || kind == InterferenceKind::kBoth) {
    model.downclock = downclock;
  }
  if (kind == InterferenceKind::kMemory || kind == InterferenceKind::kBoth) {
    model.memory = std::move(curve);
  }
  return model;
}

double penalty(const InterferenceModel& model,
               const InterferenceContext& context) {
  if (context.active_instances <= 1) return 1.0;
  double factor = 1.0;
  if (model.downclock) factor *= model.downclock->factor(context.simd_fraction);
  if (model.memory) {
    const double others = (context.active_instances - 1) *
                          std::max(0.0, context.per_instance_bandwidth_gbps);
    factor *= model.memory->multiplier(others);
  }
  return factor;
}

LatencyPenalty make_latency_penalty(const InterferenceModel& model,
                                    const InterferenceContext& context) {
  const double factor = penalty(model, context);
  return [factor](const ProfileKey&) { return factor; };
}

GapReport gap_report(const ProfileTable& profile, const Configuration& config,
                     const InterferenceModel& model,
                     double per_instance_bandwidth_gbps) {
  GapReport report;
  report.expected_ms = objective(profile, config);
  InterferenceContext context;
  context.active_instances = config.instance_count();
  context.per_instance_bandwidth_gbps = per_instance_bandwidth_gbps;
  context.simd_fraction =
      config.total_threads > 0
          ? static_cast<double>(config.used_threads()) / config.total_threads
          : 0.0;
  report.factor = penalty(model, context);
  report.adjusted_ms = objective(
      apply_penalty(profile, make_latency_penalty(model, context)), config);
  report.gap_fraction =
      (report.adjusted_ms - report.expected_ms) / report.expected_ms;
  return report;
}

}  // namespace thinserve
