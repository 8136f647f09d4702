#include <gtest/gtest.h>

#include "thinserve/errors.hpp"
#include "thinserve/estimator.hpp"
#include "thinserve/random.hpp"

namespace thinserve {
namespace {

using std::chrono::milliseconds;
using std::chrono::seconds;

EstimatorState fresh(double alpha = 0.25, int window = 8, int batch = 8) {
  return make_estimator({.alpha = alpha, .window = window}, batch);
}

TEST(FloorPow2, Values) {
  EXPECT_EQ(floor_pow2(0.0), 1);
  EXPECT_EQ(floor_pow2(0.7), 1);
  EXPECT_EQ(floor_pow2(1.0), 1);
  EXPECT_EQ(floor_pow2(12.0), 8);
  EXPECT_EQ(floor_pow2(63.999), 32);
  EXPECT_EQ(floor_pow2(64.0), 64);
  EXPECT_EQ(floor_pow2(-3.0), 1);
}

TEST(Observe, AlphaOneCopiesSample) {
  auto s = fresh(1.0);
  s = observe(s, 30);
  s = observe(s, 12);
  EXPECT_EQ(s.ewma, 12.0);
  EXPECT_EQ(s.history.back(), 8);
}

TEST(Observe, BlendsWithPreviousAverage) {
  auto s = fresh(0.5);
  s.ewma = 8.0;
  s.primed = true;
  s = observe(s, 16);
  EXPECT_EQ(s.ewma, 12.0);
  EXPECT_EQ(s.history.back(), 8);
}

TEST(Observe, FirstSampleSeedsAverage) {
  auto s = observe(fresh(), 40);
  EXPECT_EQ(s.ewma, 40.0);
  EXPECT_EQ(s.history.back(), 32);
}

TEST(Observe, EmptyQueueClampsToOne) {
  auto s = fresh();
  for (int k = 0; k < 50; ++k) s = observe(s, 0);
  EXPECT_LT(s.ewma, 1e-3);
  EXPECT_EQ(s.history.back(), 1);
  EXPECT_EQ(smoothed_batch(s), 1);
}

TEST(Observe, WindowIsBounded) {
  auto s = fresh(0.25, 3);
  for (int k = 0; k < 10; ++k) s = observe(s, k);
  EXPECT_EQ(s.history.size(), 3u);
}

TEST(Observe, MaxBatchCapsEstimates) {
  auto s = make_estimator({.max_batch = 64}, 8);
  s = observe(s, 500);
  EXPECT_EQ(s.history.back(), 64);
}

TEST(SmoothedBatch, ModeWithSmallTieBreak) {
  auto s = fresh();
  s.history = {8, 8, 16};
  EXPECT_EQ(smoothed_batch(s), 8);
  s.history = {8, 16};
  EXPECT_EQ(smoothed_batch(s), 8);
  s.history = {32, 16, 32};
  EXPECT_EQ(smoothed_batch(s), 32);
  s.history.clear();
  EXPECT_THROW(smoothed_batch(s), StateError);
}

TEST(Estimator, RejectsBadOptions) {
  EXPECT_THROW(make_estimator({.alpha = 0.0}, 8), ValidationError);
  EXPECT_THROW(make_estimator({.alpha = 1.5}, 8), ValidationError);
  EXPECT_THROW(make_estimator({.window = 0}, 8), ValidationError);
  EXPECT_THROW(make_estimator({}, 0), ValidationError);
}

TEST(ShouldReconfigure, NoChangeMeansNoBatch) {
  auto s = fresh();
  for (int k = 0; k < 8; ++k) s = observe(s, 8);
  const auto d = should_reconfigure(s, seconds(5));
  EXPECT_FALSE(d.new_batch.has_value());
  EXPECT_EQ(d.state.last_check, seconds(5));
}

TEST(ShouldReconfigure, ReportsNewBatchAfterTimeout) {
  auto s = fresh(1.0);
  for (int k = 0; k < 8; ++k) s = observe(s, 64);
  EXPECT_FALSE(should_reconfigure(s, seconds(4)).new_batch.has_value());
  const auto d = should_reconfigure(s, seconds(5));
  EXPECT_EQ(d.new_batch, 64);
  // Not committed yet, but the timeout window restarted.
  EXPECT_FALSE(should_reconfigure(d.state, seconds(6)).new_batch.has_value());
  EXPECT_EQ(should_reconfigure(d.state, seconds(10)).new_batch, 64);
  EXPECT_FALSE(should_reconfigure(commit_batch(d.state, 64), seconds(10))
                   .new_batch.has_value());
}

// A step in queue depth from the 8 bucket to the 64 bucket moves the smoothed
// batch once, directly, within one window of samples. The post-step depths sit
// high in the 64 bucket: the average must pass 64 by the third sample, or the
// 32 bucket collects as many votes as 64 and wins the tie.
TEST(Estimator, StepTraceTransitionsOnce) {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    Rng rng(seed);
    auto s = fresh();
    std::vector<int> smoothed;
    for (int k = 0; k < 20; ++k) {
      s = observe(s, rng.uniform_int(8, 11));
      smoothed.push_back(smoothed_batch(s));
    }
    for (int k = 0; k < 40; ++k) {
      s = observe(s, rng.uniform_int(112, 127));
      smoothed.push_back(smoothed_batch(s));
    }
    int changes = 0;
    int first_change = -1;
    for (std::size_t k = 1; k < smoothed.size(); ++k) {
      if (smoothed[k] != smoothed[k - 1]) {
        ++changes;
        if (first_change < 0) first_change = static_cast<int>(k);
        ASSERT_EQ(smoothed[k - 1], 8);
        ASSERT_EQ(smoothed[k], 64);
      }
    }
    ASSERT_EQ(smoothed.front(), 8);
    ASSERT_EQ(changes, 1) << "seed " << seed;
    ASSERT_LT(first_change - 20, 8) << "seed " << seed;
  }
}

// However the depth oscillates, committed changes are rate-limited to one per
// timeout.
TEST(Estimator, OscillationTriggersAtMostOncePerTimeout) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(seed);
    auto s = fresh();
    const auto duration = seconds(60);
    int triggers = 0;
    const int period = static_cast<int>(rng.uniform_int(1, 12));
    int k = 0;
    for (SimTime now{0}; now < duration; now += milliseconds(20), ++k) {
      const bool high = (k / period) % 2 == 1;
      s = observe(s, high ? rng.uniform_int(64, 200) : rng.uniform_int(0, 15));
      auto d = should_reconfigure(s, now);
      s = d.state;
      if (d.new_batch) {
        ++triggers;
        s = commit_batch(s, *d.new_batch);
      }
    }
    ASSERT_LE(triggers, duration / s.reconfig_timeout);
  }
}

// The average never leaves the range of what it has seen.
TEST(Estimator, EwmaStaysWithinSampleBounds) {
  Rng rng(77);
  for (int round = 0; round < 100; ++round) {
    auto s = fresh(rng.uniform(0.01, 1.0));
    std::int64_t lo = std::numeric_limits<std::int64_t>::max();
    std::int64_t hi = 0;
    for (int k = 0; k < 100; ++k) {
      const auto depth = rng.uniform_int(0, 1000);
      lo = std::min(lo, depth);
      hi = std::max(hi, depth);
      s = observe(s, depth);
      ASSERT_GE(s.ewma, static_cast<double>(lo) - 1e-9);
      ASSERT_LE(s.ewma, static_cast<double>(hi) + 1e-9);
      const int est = s.history.back();
      ASSERT_EQ(est & (est - 1), 0);
    }
  }
}

// From a fresh state, a constant depth d settles on floor_pow2(d).
TEST(Estimator, ConvergesOnConstantDepth) {
  for (int d = 0; d <= 300; ++d) {
    auto s = fresh();
    for (int k = 0; k < 8; ++k) s = observe(s, d);
    ASSERT_EQ(smoothed_batch(s), floor_pow2(d)) << d;
  }
}

}  // namespace
}  // namespace thinserve
