#include "thinserve/profile.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string_view>
#include <vector>

#include "thinserve/errors.hpp"
#include "thinserve/random.hpp"

namespace thinserve {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  std::istringstream in{std::string(text)};
  in >> value;
  return !in.fail() && in.peek() == std::char_traits<char>::eof();
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  // FNV-1a over the 8 bytes of v.
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

ProfileTable::ProfileTable(std::string model_id, Entries entries)
    : model_id_(std::move(model_id)), entries_(std::move(entries)) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [key, latency] : entries_) {
    if (key.threads < 1 || key.batch < 1) {
      throw ValidationError("profile key (" + std::to_string(key.threads) +
                            "," + std::to_string(key.batch) +
                            ") must have threads >= 1 and batch >= 1");
    }
    if (!std::isfinite(latency) || latency <= 0.0) {
      throw ValidationError("profile latency for (" +
                            std::to_string(key.threads) + "," +
                            std::to_string(key.batch) +
                            ") must be finite and > 0");
    }
    max_threads_ = std::max(max_threads_, key.threads);
    max_batch_ = std::max(max_batch_, key.batch);
    h = mix(h, static_cast<std::uint64_t>(key.threads));
    h = mix(h, static_cast<std::uint64_t>(key.batch));
    h = mix(h, std::bit_cast<std::uint64_t>(latency));
  }
  fingerprint_ = h;
  if (max_batch_ > 0) {
    batch_exponent_ = std::bit_width(static_cast<unsigned>(max_batch_)) - 1;
  }
  canonical_ = !entries_.empty() &&
               std::has_single_bit(static_cast<unsigned>(max_batch_)) &&
               static_cast<std::int64_t>(entries_.size()) ==
                   grid_size(max_threads_, batch_exponent_);
  if (canonical_) {
    for (const auto& [key, latency] : entries_) {
      if (!std::has_single_bit(static_cast<unsigned>(key.batch))) {
        canonical_ = false;
        break;
      }
    }
  }
}

std::optional<double> ProfileTable::lookup(ProfileKey key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::int64_t grid_size(int max_threads, int batch_exponent) {
  return static_cast<std::int64_t>(batch_exponent + 1) * max_threads;
}

ProfileTable parse_profile(std::istream& in, std::string model_id) {
  ProfileTable::Entries entries;
  std::string raw;
  int line_no = 0;
  bool saw_header = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      // A `# model: <id>` comment ahead of the header names the model.
      constexpr std::string_view kModel = "model:";
      const auto comment = trim(line.substr(1));
      if (!saw_header && comment.starts_with(kModel)) {
        const auto id = trim(comment.substr(kModel.size()));
        if (!id.empty()) model_id = std::string(id);
      }
      continue;
    }
    const auto fields = split_commas(line);
    const auto where = "line " + std::to_string(line_no);
    if (!saw_header) {
      if (fields.size() != 3 || fields[0] != "threads" ||
          fields[1] != "batch" || fields[2] != "latency_ms") {
        throw ParseError(where +
                         ": expected header `threads,batch,latency_ms`");
      }
      saw_header = true;
      continue;
    }
    if (fields.size() != 3) {
      throw ParseError(where + ": expected 3 fields, got " +
                       std::to_string(fields.size()));
    }
    ProfileKey key;
    double latency = 0.0;
    if (!parse_number(fields[0], key.threads) ||
        !parse_number(fields[1], key.batch) ||
        !parse_number(fields[2], latency)) {
      throw ParseError(where + ": malformed row `" + std::string(line) + "`");
    }
    if (key.threads < 1 || key.batch < 1) {
      throw ValidationError(where + ": threads and batch must be >= 1");
    }
    if (!std::isfinite(latency) || latency <= 0.0) {
      throw ValidationError(where + ": latency must be finite and > 0");
    }
    if (!entries.emplace(key, latency).second) {
      throw ValidationError(where + ": duplicate key (" +
                            std::to_string(key.threads) + "," +
                            std::to_string(key.batch) + ")");
    }
  }
  if (!saw_header) throw ParseError("profile is missing its header row");
  return ProfileTable(std::move(model_id), std::move(entries));
}

ProfileTable load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open profile " + path.string());
  return parse_profile(in, path.stem().string());
}

void write_profile(std::ostream& out, const ProfileTable& table) {
  out << "# model: " << table.model_id() << "\n";
  out << "threads,batch,latency_ms\n";
  // max_digits10 keeps load(save(x)) == x.
  out << std::setprecision(17);
  for (const auto& [key, latency] : table.entries()) {
    out << key.threads << ',' << key.batch << ',' << latency << '\n';
  }
}

void save_profile(const std::filesystem::path& path,
                  const ProfileTable& table) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write profile " + path.string());
  write_profile(out, table);
}

ProfileTable synthesize_profile(const SyntheticProfileSpec& spec) {
  if (!(spec.base_latency_ms > 0.0) || !std::isfinite(spec.base_latency_ms)) {
    throw ValidationError("synthetic base latency must be finite and > 0");
  }
  if (!(spec.parallel_fraction >= 0.0 && spec.parallel_fraction <= 1.0)) {
    throw ValidationError("parallel fraction must lie in [0, 1]");
  }
  if (!(spec.fixed_fraction >= 0.0 && spec.fixed_fraction < 1.0)) {
    throw ValidationError("fixed batch fraction must lie in [0, 1)");
  }
  // Latency must not shrink as the batch grows.
  if (!(spec.batch_scaling > 0.0 && spec.batch_scaling <= 2.0)) {
    throw ValidationError("batch scaling exponent must lie in (0, 2]");
  }
  if (!(spec.jitter >= 0.0 && spec.jitter < 0.5)) {
    throw ValidationError("jitter must lie in [0, 0.5)");
  }
  if (spec.max_threads < 1 || spec.batch_exponent < 0 ||
      spec.batch_exponent > 30) {
    throw ValidationError("grid bounds must satisfy T >= 1, 0 <= n <= 30");
  }

  Rng rng(spec.seed);
  const double p = spec.parallel_fraction;
  ProfileTable::Entries entries;
  for (int e = 0; e <= spec.batch_exponent; ++e) {
    const int b = 1 << e;
    const double row_jitter =
        spec.jitter > 0.0 ? rng.uniform(-spec.jitter, spec.jitter) : 0.0;
    const double batch_cost =
        spec.fixed_fraction +
        (1.0 - spec.fixed_fraction) * std::pow(b, spec.batch_scaling);
    for (int t = 1; t <= spec.max_threads; ++t) {
      const double thread_cost = (1.0 - p) + p / t;
      entries.emplace(ProfileKey{t, b}, spec.base_latency_ms * batch_cost *
                                            thread_cost * (1.0 + row_jitter));
    }
  }
  return ProfileTable(spec.model_id, std::move(entries));
}

}  // namespace thinserve
