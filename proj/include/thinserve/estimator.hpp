#pragma once

#include <cstdint>
#include <deque>
#include <optional>

#include "thinserve/sim_time.hpp"

namespace thinserve {

struct EstimatorOptions {
  double alpha = 0.25;
  int window = 8;
  SimTime reconfig_timeout = std::chrono::seconds(5);
  // Upper clamp on estimates; 0 disables it. The simulator sets this to the
  // largest profiled batch.
  int max_batch = 0;
};

// Online batch-size estimator: an EWMA of sampled queue depth, rounded down to
// a power of two, then smoothed by taking the mode of the last `window`
// estimates.
struct EstimatorState {
  double alpha = 0.25;
  std::size_t window = 8;
  SimTime reconfig_timeout = std::chrono::seconds(5);
  int max_batch = 0;

  double ewma = 0.0;
  // The first sample seeds the average instead of being blended with 0.
  bool primed = false;
  std::deque<int> history;
  int current_batch = 1;
  SimTime last_check{0};
};

// Throws ValidationError for alpha outside (0, 1], window < 1, negative
// timeout or current_batch < 1.
EstimatorState make_estimator(const EstimatorOptions& options,
                              int current_batch);

// Largest power of two <= x, and 1 for x < 1.
int floor_pow2(double x);

EstimatorState observe(EstimatorState state, std::int64_t queue_depth);

// Mode of the history; ties go to the smaller batch. Throws StateError on an
// empty history.
int smoothed_batch(const EstimatorState& state);

struct ReconfigDecision {
  EstimatorState state;
  std::optional<int> new_batch;
};

// Evaluated at most once per reconfig timeout: a call made less than one
// timeout after the previous evaluation returns no batch and leaves the state
// unchanged. Otherwise records `now` as the evaluation time and returns the
// smoothed batch if it differs from current_batch.
ReconfigDecision should_reconfigure(EstimatorState state, SimTime now);

// Records that the system now serves `batch`.
EstimatorState commit_batch(EstimatorState state, int batch);

}  // namespace thinserve
