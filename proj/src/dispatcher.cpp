#include "thinserve/dispatcher.hpp"

#include <algorithm>
#include <numeric>

#include "thinserve/errors.hpp"

namespace thinserve {
namespace {

Batch take(const std::deque<Request>& pending, std::size_t& cursor, int count,
           const DispatchSlot& slot, SimTime now) {
  Batch batch;
  batch.formed_at = now;
  batch.target = slot.instance;
  batch.threads = slot.threads;
  batch.slot_batch = slot.batch;
  for (int k = 0; k < count; ++k) batch.requests.push_back(pending[cursor++]);
  return batch;
}

}  // namespace

std::optional<std::vector<Batch>> aggregate(
    const std::deque<Request>& pending, int batch_size, SimTime timeout,
    SimTime now, std::span<const DispatchSlot> slots) {
  if (pending.empty()) return std::nullopt;
  const int capacity = std::accumulate(
      slots.begin(), slots.end(), 0,
      [](int acc, const DispatchSlot& s) { return acc + s.batch; });
  if (capacity != batch_size) {
    throw ValidationError("dispatch slots cover " + std::to_string(capacity) +
                          " items but the batch size is " +
                          std::to_string(batch_size));
  }

  std::vector<Batch> batches;
  std::size_t cursor = 0;
  if (static_cast<int>(pending.size()) >= batch_size) {
    for (const auto& slot : slots) {
      batches.push_back(take(pending, cursor, slot.batch, slot, now));
    }
    return batches;
  }

  if (now - pending.front().arrival < timeout) return std::nullopt;

  std::vector<bool> used(slots.size(), false);
  int remaining = static_cast<int>(pending.size());
  while (remaining > 0) {
    // Smallest unused slot that fits the remainder; first in order on ties.
    std::optional<std::size_t> fit;
    std::optional<std::size_t> largest;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      if (used[k]) continue;
      if (slots[k].batch >= remaining &&
          (!fit || slots[k].batch < slots[*fit].batch)) {
        fit = k;
      }
      if (!largest || slots[k].batch > slots[*largest].batch) largest = k;
    }
    const std::size_t pick = fit ? *fit : *largest;
    const int count = std::min(remaining, slots[pick].batch);
    used[pick] = true;
    batches.push_back(take(pending, cursor, count, slots[pick], now));
    remaining -= count;
  }
  return batches;
}

}  // namespace thinserve
