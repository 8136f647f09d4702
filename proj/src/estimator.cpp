#include "thinserve/estimator.hpp"

#include <algorithm>
#include <bit>
#include <map>

#include "thinserve/errors.hpp"

namespace thinserve {

EstimatorState make_estimator(const EstimatorOptions& options,
                              int current_batch) {
  if (!(options.alpha > 0.0 && options.alpha <= 1.0)) {
    throw ValidationError("estimator alpha must lie in (0, 1]");
  }
  if (options.window < 1) {
    throw ValidationError("estimator mode window must be >= 1");
  }
  if (options.reconfig_timeout.count() < 0) {
    throw ValidationError("reconfiguration timeout must be >= 0");
  }
  if (current_batch < 1 || options.max_batch < 0) {
    throw ValidationError("batch sizes must be positive");
  }
  EstimatorState state;
  state.alpha = options.alpha;
  state.window = static_cast<std::size_t>(options.window);
  state.reconfig_timeout = options.reconfig_timeout;
  state.max_batch = options.max_batch;
  state.current_batch = current_batch;
  return state;
}

int floor_pow2(double x) {
  if (!(x >= 1.0)) return 1;
  if (x >= 1073741824.0) return 1 << 30;
  return static_cast<int>(std::bit_floor(static_cast<unsigned>(x)));
}

EstimatorState observe(EstimatorState state, std::int64_t queue_depth) {
  const double sample = static_cast<double>(std::max<std::int64_t>(0, queue_depth));
  if (state.primed) {
    state.ewma = state.alpha * sample + (1.0 - state.alpha) * state.ewma;
  } else {
    state.ewma = sample;
    state.primed = true;
  }
  int estimate = floor_pow2(state.ewma);
  if (state.max_batch > 0) {
    estimate = std::min(estimate, floor_pow2(state.max_batch));
  }
  state.history.push_back(estimate);
  while (state.history.size() > state.window) state.history.pop_front();
  return state;
}

int smoothed_batch(const EstimatorState& state) {
  if (state.history.empty()) {
    throw StateError("smoothed batch requested before any observation");
  }
  std::map<int, int> counts;
  for (int b : state.history) ++counts[b];
  int best = 0;
  int best_count = 0;
  // Ascending keys with a strict comparison keep the smaller batch on ties.
  for (const auto& [batch, count] : counts) {
    if (count > best_count) {
      best = batch;
      best_count = count;
    }
  }
  return best;
}

ReconfigDecision should_reconfigure(EstimatorState state, SimTime now) {
  if (now - state.last_check < state.reconfig_timeout) {
    return {std::move(state), std::nullopt};
  }
  state.last_check = now;
  if (state.history.empty()) return {std::move(state), std::nullopt};
  const int smoothed = smoothed_batch(state);
  if (smoothed == state.current_batch) return {std::move(state), std::nullopt};
  return {std::move(state), smoothed};
}

EstimatorState commit_batch(EstimatorState state, int batch) {
  if (batch < 1) throw ValidationError("batch must be >= 1");
  state.current_batch = batch;
  return state;
}

}  // namespace thinserve
