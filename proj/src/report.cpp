#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "thinserve/simulator.hpp"

namespace thinserve {

double RunReport::mean_request_latency_ms() const {
  if (completions.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : completions) sum += to_ms(r.completion - r.arrival);
  return sum / static_cast<double>(completions.size());
}

double RunReport::request_latency_percentile_ms(double q) const {
  if (completions.empty()) return 0.0;
  std::vector<SimTime> latencies;
  latencies.reserve(completions.size());
  for (const auto& r : completions) latencies.push_back(r.completion - r.arrival);
  std::sort(latencies.begin(), latencies.end());
  // Nearest rank.
  const auto rank = static_cast<std::size_t>(
      std::ceil(std::clamp(q, 0.0, 1.0) * static_cast<double>(latencies.size())));
  return to_ms(latencies[rank == 0 ? 0 : rank - 1]);
}

double RunReport::max_service_ms() const {
  double worst = 0.0;
  for (const auto& d : dispatches) worst = std::max(worst, d.service_ms);
  return worst;
}

double RunReport::max_reconfig_dispatch_gap_ms() const {
  std::vector<const DispatchRecord*> ordered;
  for (const auto& d : dispatches) ordered.push_back(&d);
  std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) {
    return a->dispatched < b->dispatched;
  });
  double worst = 0.0;
  for (std::size_t k = 1; k < ordered.size(); ++k) {
    const auto at = ordered[k]->dispatched;
    const bool inside = std::any_of(
        reconfig_windows.begin(), reconfig_windows.end(), [&](const auto& w) {
          return at >= w.start && (!w.end || at <= *w.end);
        });
    if (!inside) continue;
    const auto since = std::max(ordered[k - 1]->dispatched,
                                ordered[k]->oldest_arrival);
    worst = std::max(worst, to_ms(at - since));
  }
  return worst;
}

nlohmann::json summary_json(const RunReport& report) {
  double batch_latency_sum = 0.0;
  int partial = 0;
  for (const auto& d : report.dispatches) {
    batch_latency_sum += d.batch_latency_ms;
    partial += d.partial ? 1 : 0;
  }
  auto phases = nlohmann::json::array();
  for (const auto& [time, phase] : report.phase_log) {
    phases.push_back({{"time_ms", to_ms(time)}, {"phase", phase_name(phase)}});
  }
  auto history = nlohmann::json::array();
  for (const auto& change : report.config_history) {
    history.push_back({{"time_ms", to_ms(change.time)},
                       {"kind", change.kind},
                       {"config", change.config}});
  }
  auto windows = nlohmann::json::array();
  for (const auto& w : report.reconfig_windows) {
    windows.push_back(
        {{"start_ms", to_ms(w.start)},
         {"end_ms", w.end ? nlohmann::json(to_ms(*w.end)) : nlohmann::json()}});
  }
  return {
      {"requests", report.arrived},
      {"completed", report.completed},
      {"dropped", report.dropped},
      {"dispatches", report.dispatches.size()},
      {"partial_dispatches", partial},
      {"reconfigurations", report.reconfigurations},
      {"active_passive_cycles", report.active_passive_cycles},
      {"worker_scalings", report.worker_scalings},
      {"rejected_reconfigurations", report.rejected_reconfigurations},
      {"mean_request_latency_ms", report.mean_request_latency_ms()},
      {"p50_request_latency_ms", report.request_latency_percentile_ms(0.5)},
      {"p99_request_latency_ms", report.request_latency_percentile_ms(0.99)},
      {"mean_batch_latency_ms",
       report.dispatches.empty()
           ? 0.0
           : batch_latency_sum / static_cast<double>(report.dispatches.size())},
      {"max_service_ms", report.max_service_ms()},
      {"max_reconfig_dispatch_gap_ms", report.max_reconfig_dispatch_gap_ms()},
      {"phase_log", std::move(phases)},
      {"config_history", std::move(history)},
      {"reconfig_windows", std::move(windows)},
      {"allocation",
       {{"active", report.active_plan}, {"passive", report.passive_plan}}},
  };
}

void write_timeline(std::ostream& out, const RunReport& report) {
  out << "time_ms,batch_latency_ms,phase,active_config\n";
  out << std::fixed << std::setprecision(3);
  for (const auto& d : report.dispatches) {
    out << to_ms(d.completed) << ',' << d.batch_latency_ms << ','
        << phase_name(d.phase) << ',' << d.config << '\n';
  }
}

}  // namespace thinserve
