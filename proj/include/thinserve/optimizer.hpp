#pragma once

#include <atomic>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "thinserve/profile.hpp"

namespace thinserve {

// `instances` concurrent model instances, each running `threads` intra-op
// threads over a slice of `batch` items.
struct InstanceGroup {
  int instances = 1;
  int threads = 1;
  int batch = 1;

  friend auto operator<=>(const InstanceGroup&, const InstanceGroup&) =
      default;
};

// A multi-instance serving configuration for a <T, B> budget. Groups are
// canonical: one group per distinct (threads, batch), sorted by threads then
// batch, both descending.
struct Configuration {
  std::string model_id;
  std::vector<InstanceGroup> groups;
  int total_threads = 0;
  int total_batch = 0;
  double expected_latency_ms = 0.0;

  int used_threads() const;
  int batch_sum() const;
  int instance_count() const;

  friend bool operator==(const Configuration&, const Configuration&) = default;
};

// Compact one-line form, e.g. "i1t6b8+i2t4b4".
std::string describe(const Configuration& config);

void to_json(nlohmann::json& j, const Configuration& config);
void from_json(const nlohmann::json& j, Configuration& config);

struct OptimizerOptions {
  // Require sum(i*t) == T exactly. By default idle threads are allowed, which
  // never hurts under the max-latency objective.
  bool strict_threads = false;
};

// The DP memo over all sub-budgets (t, b) with t <= T and b <= B. Each finite
// cell carries a backpointer to the last item chosen.
class OptTable {
 public:
  static constexpr double kInfinity = std::numeric_limits<double>::infinity();

  OptTable(int max_threads, int max_batch);

  int max_threads() const { return max_threads_; }
  int max_batch() const { return max_batch_; }

  double value(int t, int b) const { return value_[index(t, b)]; }
  std::optional<ProfileKey> choice(int t, int b) const;
  // Instance count of the configuration the backpointers reconstruct.
  int instances(int t, int b) const { return count_[index(t, b)]; }

  // Follows backpointers from (t, b). Throws InfeasibleError when the cell is
  // infinite.
  Configuration reconstruct(int t, int b, std::string model_id = {}) const;

 private:
  friend OptTable build_opt_table(const ProfileTable&, int, int,
                                  const OptimizerOptions&);

  std::size_t index(int t, int b) const {
    return static_cast<std::size_t>(t) * (max_batch_ + 1) + b;
  }

  int max_threads_;
  int max_batch_;
  std::vector<double> value_;
  std::vector<int> count_;
  std::vector<ProfileKey> choice_;  // {0, 0} marks "no item"
};

// Fills opt[t][b] for every 0 <= t <= T, 0 <= b <= B:
//
//   opt[t][b] = min over profiled (t', b') of max(opt[t - t'][b - b'], L(t', b'))
//
// Ties in value prefer fewer total instances, then larger t', then smaller b'.
OptTable build_opt_table(const ProfileTable& profile, int total_threads,
                         int total_batch, const OptimizerOptions& options = {});

// The configuration minimizing the slowest instance's latency subject to
// sum(i*b) == B and sum(i*t) <= T (== T when strict). Throws InfeasibleError.
Configuration solve(const ProfileTable& profile, int total_threads,
                    int total_batch, const OptimizerOptions& options = {});

// max over groups of L(t_j, b_j). Throws UnknownKeyError for unprofiled
// groups.
double objective(const ProfileTable& profile, const Configuration& config);

using LatencyPenalty = std::function<double(const ProfileKey&)>;

// A copy of `profile` with every latency multiplied by penalty(key).
ProfileTable apply_penalty(const ProfileTable& profile,
                           const LatencyPenalty& penalty);
ProfileTable apply_penalty(const ProfileTable& profile, double factor);

// Memoized solves keyed by (model, T, B, strictness). An entry computed from a
// different profile fingerprint is treated as a miss and replaced, so swapping
// a model's profile invalidates its entries.
class ConfigCache {
 public:
  std::optional<Configuration> find(const ProfileTable& profile, int T, int B,
                                    const OptimizerOptions& options) const;
  void store(const ProfileTable& profile, const OptimizerOptions& options,
             const Configuration& config);
  void invalidate(std::string_view model_id);

  std::size_t size() const;
  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }

 private:
  friend Configuration solve_cached(ConfigCache&, const ProfileTable&, int,
                                    int, const OptimizerOptions&);

  struct Key {
    std::string model_id;
    int threads;
    int batch;
    bool strict;
    friend auto operator<=>(const Key&, const Key&) = default;
  };
  struct Entry {
    std::uint64_t fingerprint;
    Configuration config;
  };

  mutable std::shared_mutex mu_;
  std::map<Key, Entry> entries_;
  mutable std::atomic<std::size_t> hits_{0};
  mutable std::atomic<std::size_t> misses_{0};
};

Configuration solve_cached(ConfigCache& cache, const ProfileTable& profile,
                           int total_threads, int total_batch,
                           const OptimizerOptions& options = {});

}  // namespace thinserve
