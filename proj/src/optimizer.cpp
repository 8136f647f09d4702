#include "thinserve/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include "thinserve/errors.hpp"

namespace thinserve {

int Configuration::used_threads() const {
  int sum = 0;
  for (const auto& g : groups) sum += g.instances * g.threads;
  return sum;
}

int Configuration::batch_sum() const {
  int sum = 0;
  for (const auto& g : groups) sum += g.instances * g.batch;
  return sum;
}

int Configuration::instance_count() const {
  int sum = 0;
  for (const auto& g : groups) sum += g.instances;
  return sum;
}

std::string describe(const Configuration& config) {
  std::ostringstream out;
  for (std::size_t k = 0; k < config.groups.size(); ++k) {
    const auto& g = config.groups[k];
    if (k > 0) out << '+';
    out << 'i' << g.instances << 't' << g.threads << 'b' << g.batch;
  }
  return out.str();
}

void to_json(nlohmann::json& j, const Configuration& config) {
  auto groups = nlohmann::json::array();
  for (const auto& g : config.groups) {
    groups.push_back({{"i", g.instances}, {"t", g.threads}, {"b", g.batch}});
  }
  j = nlohmann::json{{"model", config.model_id},
                     {"T", config.total_threads},
                     {"B", config.total_batch},
                     {"expected_latency_ms", config.expected_latency_ms},
                     {"groups", std::move(groups)}};
}

void from_json(const nlohmann::json& j, Configuration& config) {
  config.model_id = j.at("model").get<std::string>();
  config.total_threads = j.at("T").get<int>();
  config.total_batch = j.at("B").get<int>();
  config.expected_latency_ms = j.at("expected_latency_ms").get<double>();
  config.groups.clear();
  for (const auto& g : j.at("groups")) {
    config.groups.push_back(
        {g.at("i").get<int>(), g.at("t").get<int>(), g.at("b").get<int>()});
  }
}

OptTable::OptTable(int max_threads, int max_batch)
    : max_threads_(max_threads),
      max_batch_(max_batch),
      value_(static_cast<std::size_t>(max_threads + 1) * (max_batch + 1),
             kInfinity),
      count_(value_.size(), 0),
      choice_(value_.size(), ProfileKey{0, 0}) {}

std::optional<ProfileKey> OptTable::choice(int t, int b) const {
  const auto& key = choice_[index(t, b)];
  if (key.threads == 0) return std::nullopt;
  return key;
}

Configuration OptTable::reconstruct(int t, int b, std::string model_id) const {
  if (t < 0 || b < 0 || t > max_threads_ || b > max_batch_) {
    throw ValidationError("cell outside the optimizer table");
  }
  if (std::isinf(value(t, b))) {
    throw InfeasibleError("no combination of profiled configurations covers "
                          "batch " + std::to_string(b) + " within " +
                          std::to_string(t) + " threads");
  }
  Configuration config;
  config.model_id = std::move(model_id);
  config.total_threads = t;
  config.total_batch = b;
  config.expected_latency_ms = value(t, b);

  std::map<ProfileKey, int> counts;
  int ct = t;
  int cb = b;
  while (cb > 0) {
    const auto item = choice(ct, cb);
    // A finite cell with b > 0 always has a backpointer.
    counts[*item] += 1;
    ct -= item->threads;
    cb -= item->batch;
  }
  for (auto it = counts.rbegin(); it != counts.rend(); ++it) {
    config.groups.push_back({it->second, it->first.threads, it->first.batch});
  }
  return config;
}

OptTable build_opt_table(const ProfileTable& profile, int total_threads,
                         int total_batch, const OptimizerOptions& options) {
  if (total_threads < 0 || total_batch < 0) {
    throw ValidationError("thread and batch budgets must be non-negative");
  }
  struct Item {
    int threads;
    int batch;
    double latency;
  };
  std::vector<Item> items;
  for (const auto& [key, latency] : profile.entries()) {
    if (key.threads <= total_threads && key.batch <= total_batch) {
      items.push_back({key.threads, key.batch, latency});
    }
  }

  OptTable table(total_threads, total_batch);
  for (int t = 0; t <= total_threads; ++t) {
    if (t == 0 || !options.strict_threads) {
      table.value_[table.index(t, 0)] = 0.0;
    }
  }

  for (int t = 1; t <= total_threads; ++t) {
    for (int b = 1; b <= total_batch; ++b) {
      double best = OptTable::kInfinity;
      int best_count = 0;
      const Item* best_item = nullptr;
      for (const auto& item : items) {
        if (item.threads > t || item.batch > b) continue;
        const auto sub = table.index(t - item.threads, b - item.batch);
        const double rest = table.value_[sub];
        if (std::isinf(rest)) continue;
        const double v = std::max(rest, item.latency);
        const int count = table.count_[sub] + 1;
        bool better = false;
        if (best_item == nullptr || v < best) {
          better = true;
        } else if (v == best) {
          if (count != best_count) {
            better = count < best_count;
          } else if (item.threads != best_item->threads) {
            better = item.threads > best_item->threads;
          } else {
            better = item.batch < best_item->batch;
          }
        }
        if (better) {
          best = v;
          best_count = count;
          best_item = &item;
        }
      }
      if (best_item != nullptr) {
        const auto cell = table.index(t, b);
        table.value_[cell] = best;
        table.count_[cell] = best_count;
        table.choice_[cell] = {best_item->threads, best_item->batch};
      }
    }
  }
  return table;
}

Configuration solve(const ProfileTable& profile, int total_threads,
                    int total_batch, const OptimizerOptions& options) {
  if (total_threads < 1 || total_batch < 1) {
    throw ValidationError("solve requires T >= 1 and B >= 1");
  }
  if (profile.empty()) throw ValidationError("solve requires a profile");
  const auto table =
      build_opt_table(profile, total_threads, total_batch, options);
  return table.reconstruct(total_threads, total_batch, profile.model_id());
}

double objective(const ProfileTable& profile, const Configuration& config) {
  double worst = 0.0;
  for (const auto& g : config.groups) {
    const auto latency = profile.lookup({g.threads, g.batch});
    if (!latency) {
      throw UnknownKeyError("configuration uses unprofiled (" +
                            std::to_string(g.threads) + "," +
                            std::to_string(g.batch) + ")");
    }
    worst = std::max(worst, *latency);
  }
  return worst;
}

ProfileTable apply_penalty(const ProfileTable& profile,
                           const LatencyPenalty& penalty) {
  ProfileTable::Entries scaled;
  for (const auto& [key, latency] : profile.entries()) {
    const double factor = penalty(key);
    if (!std::isfinite(factor) || factor <= 0.0) {
      throw ValidationError("penalty factor must be finite and > 0");
    }
    scaled.emplace(key, latency * factor);
  }
  return ProfileTable(profile.model_id(), std::move(scaled));
}

ProfileTable apply_penalty(const ProfileTable& profile, double factor) {
  return apply_penalty(profile, [factor](const ProfileKey&) { return factor; });
}

std::optional<Configuration> ConfigCache::find(
    const ProfileTable& profile, int T, int B,
    const OptimizerOptions& options) const {
  std::shared_lock lock(mu_);
  const auto it =
      entries_.find({profile.model_id(), T, B, options.strict_threads});
  if (it == entries_.end() || it->second.fingerprint != profile.fingerprint()) {
    return std::nullopt;
  }
  return it->second.config;
}

void ConfigCache::store(const ProfileTable& profile,
                        const OptimizerOptions& options,
                        const Configuration& config) {
  std::unique_lock lock(mu_);
  entries_.insert_or_assign(
      Key{profile.model_id(), config.total_threads, config.total_batch,
          options.strict_threads},
      Entry{profile.fingerprint(), config});
}

void ConfigCache::invalidate(std::string_view model_id) {
  std::unique_lock lock(mu_);
  std::erase_if(entries_,
                [&](const auto& kv) { return kv.first.model_id == model_id; });
}

std::size_t ConfigCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

Configuration solve_cached(ConfigCache& cache, const ProfileTable& profile,
                           int total_threads, int total_batch,
                           const OptimizerOptions& options) {
  if (auto hit = cache.find(profile, total_threads, total_batch, options)) {
    ++cache.hits_;
    return *std::move(hit);
  }
  ++cache.misses_;
  auto config = solve(profile, total_threads, total_batch, options);
  cache.store(profile, options, config);
  return config;
}

}  // namespace thinserve
