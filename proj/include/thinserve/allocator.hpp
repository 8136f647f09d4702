#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace thinserve {

// Socket/core layout of the machine. Core ids are globally unique.
struct Topology {
  std::vector<std::vector<int>> sockets;

  int total_cores() const;
  // Index of the socket holding `core`, or -1.
  int socket_of(int core) const;
};

// Throws ValidationError on empty sockets or duplicated core ids.
void validate(const Topology& topology);

// `sockets` sockets of `cores_per_socket` cores with sequential ids.
Topology make_topology(int sockets, int cores_per_socket);

// Accepts "SxC" (e.g. "2x8") or a socket list such as
// "sockets: [[0..7],[8..15]]" where each element is a core id or an inclusive
// a..b range.
Topology parse_topology(std::string_view text);
Topology load_topology(const std::filesystem::path& path);

using InstanceId = std::string;

struct CoreDemand {
  InstanceId instance;
  int threads = 1;
  // User-specified placement; bypasses round-robin but must name free cores.
  std::optional<std::vector<int>> pinned_cores;
};

struct AllocationPlan {
  std::map<InstanceId, std::vector<int>> assignments;
  std::set<int> free_cores;

  static AllocationPlan for_topology(const Topology& topology);

  int assigned_cores() const;
  // Instances whose cores lie on more than one socket.
  int spanning_instances(const Topology& topology) const;

  friend bool operator==(const AllocationPlan&, const AllocationPlan&) =
      default;
};

// Places each demand in order on the socket with the most free cores (ties to
// the lowest socket id) among those that can hold it whole. When no socket
// can, the demand spills across sockets, taking the fullest sockets first,
// unless another instance already spans sockets. All-or-nothing: on error the
// input plan is left as it was.
//
// Throws InsufficientCoresError, or ValidationError for bad demands.
AllocationPlan allocate(const Topology& topology, AllocationPlan plan,
                        std::span<const CoreDemand> demands);

// Returns the instance's cores to the free set. Throws UnknownInstanceError.
AllocationPlan release(AllocationPlan plan, const InstanceId& instance);

void to_json(nlohmann::json& j, const AllocationPlan& plan);

}  // namespace thinserve
