#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "thinserve/allocator.hpp"
#include "thinserve/sim_time.hpp"

namespace thinserve {

struct Request {
  std::int64_t id = 0;
  SimTime arrival{0};
  std::optional<SimTime> completion;
};

// One instance's configured share of an aggregated batch.
struct DispatchSlot {
  InstanceId instance;
  int threads = 1;
  int batch = 1;
};

// The slice of an aggregated batch sent to one instance.
struct Batch {
  std::vector<Request> requests;
  SimTime formed_at{0};
  InstanceId target;
  int threads = 1;
  // The instance's configured b; requests.size() may be smaller.
  int slot_batch = 1;
};

// Forms the next aggregated batch from the head of `pending` (FIFO):
//
//  - with at least `batch_size` requests queued, the first `batch_size` are
//    split over `slots` in order, each slot taking its configured b;
//  - with fewer, once the oldest has waited `timeout`, all of them go to the
//    slot with the smallest b that fits, or, when none fits, largest slots
//    first until the remainder fits one;
//  - otherwise nothing is formed.
//
// The caller removes the returned requests from the queue. `slots` must
// cover `batch_size` exactly.
std::optional<std::vector<Batch>> aggregate(const std::deque<Request>& pending,
                                            int batch_size, SimTime timeout,
                                            SimTime now,
                                            std::span<const DispatchSlot> slots);

}  // namespace thinserve
