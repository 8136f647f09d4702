#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

namespace thinserve {

// A profiled single-instance shape: `threads` intra-op threads on a batch of
// `batch` items.
struct ProfileKey {
  int threads = 1;
  int batch = 1;

  friend auto operator<=>(const ProfileKey&, const ProfileKey&) = default;
};

// Measured average batch latency (milliseconds) for single-instance
// configurations. Immutable once constructed; safe to share across readers.
class ProfileTable {
 public:
  using Entries = std::map<ProfileKey, double>;

  // Validates every entry: keys >= 1, latencies finite and > 0.
  // Throws ValidationError otherwise.
  ProfileTable(std::string model_id, Entries entries);

  const std::string& model_id() const { return model_id_; }
  const Entries& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Largest profiled thread count.
  int max_threads() const { return max_threads_; }
  // floor(log2(largest profiled batch)).
  int batch_exponent() const { return batch_exponent_; }
  int max_batch() const { return max_batch_; }

  // True when the keys are exactly {1..max_threads} x {2^0..2^batch_exponent}.
  // Partial tables are legal; this only flags them.
  bool is_canonical_grid() const { return canonical_; }

  // Order-sensitive hash of the entries, used to detect profile replacement.
  std::uint64_t fingerprint() const { return fingerprint_; }

  std::optional<double> lookup(ProfileKey key) const;

  friend bool operator==(const ProfileTable& a, const ProfileTable& b) {
    return a.model_id_ == b.model_id_ && a.entries_ == b.entries_;
  }

 private:
  std::string model_id_;
  Entries entries_;
  int max_threads_ = 0;
  int batch_exponent_ = 0;
  int max_batch_ = 0;
  bool canonical_ = false;
  std::uint64_t fingerprint_ = 0;
};

inline std::optional<double> lookup(const ProfileTable& table,
                                    ProfileKey key) {
  return table.lookup(key);
}

// Number of cells in the canonical power-of-two grid:
// (batch_exponent + 1) * max_threads.
std::int64_t grid_size(int max_threads, int batch_exponent);

// CSV with header `threads,batch,latency_ms`; `#` lines and blank lines are
// skipped, except that a `# model: <id>` line before the header overrides
// `model_id`. Duplicate keys and non-positive latencies are rejected.
ProfileTable parse_profile(std::istream& in, std::string model_id);
// Model id defaults to the file stem.
ProfileTable load_profile(const std::filesystem::path& path);

void write_profile(std::ostream& out, const ProfileTable& table);
void save_profile(const std::filesystem::path& path, const ProfileTable& table);

// Parameters of the synthetic fixture curve
//
//   L(t, b) = base * (fixed + (1 - fixed) * b^batch_exponent_gamma)
//                  * ((1 - p) + p / t) * (1 + jitter_b)
//
// i.e. an Amdahl-style thread speedup with parallel fraction p and a batch
// cost with a fixed share plus a power-law per-item share. jitter_b is drawn
// once per batch row from the seed, so the thread curve of every row keeps its
// strictly shrinking speedups.
struct SyntheticProfileSpec {
  std::string model_id = "synthetic";
  double base_latency_ms = 100.0;
  double parallel_fraction = 0.9;
  double fixed_fraction = 0.0;
  double batch_scaling = 1.0;
  double jitter = 0.0;
  int max_threads = 16;
  int batch_exponent = 10;
  std::uint64_t seed = 1;
};

ProfileTable synthesize_profile(const SyntheticProfileSpec& spec);

}  // namespace thinserve
