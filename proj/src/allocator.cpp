#include "thinserve/allocator.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>

#include "thinserve/errors.hpp"

namespace thinserve {

int Topology::total_cores() const {
  int n = 0;
  for (const auto& s : sockets) n += static_cast<int>(s.size());
  return n;
}

int Topology::socket_of(int core) const {
  for (std::size_t s = 0; s < sockets.size(); ++s) {
    if (std::find(sockets[s].begin(), sockets[s].end(), core) !=
        sockets[s].end()) {
      return static_cast<int>(s);
    }
  }
  return -1;
}

void validate(const Topology& topology) {
  if (topology.sockets.empty()) {
    throw ValidationError("topology needs at least one socket");
  }
  std::set<int> seen;
  for (const auto& socket : topology.sockets) {
    if (socket.empty()) throw ValidationError("topology has an empty socket");
    for (int core : socket) {
      if (core < 0) throw ValidationError("core ids must be non-negative");
      if (!seen.insert(core).second) {
        throw ValidationError("core id " + std::to_string(core) +
                              " appears twice in the topology");
      }
    }
  }
}

Topology make_topology(int sockets, int cores_per_socket) {
  if (sockets < 1 || cores_per_socket < 1) {
    throw ValidationError("topology needs >= 1 socket and >= 1 core");
  }
  Topology topology;
  int next = 0;
  for (int s = 0; s < sockets; ++s) {
    auto& cores = topology.sockets.emplace_back(cores_per_socket);
    std::iota(cores.begin(), cores.end(), next);
    next += cores_per_socket;
  }
  return topology;
}

namespace {

class ListParser {
 public:
  explicit ListParser(std::string_view text) : text_(text) {}

  Topology parse() {
    Topology topology;
    expect('[');
    skip_space();
    if (peek() == ']') throw ParseError("topology lists no sockets");
    while (true) {
      topology.sockets.push_back(parse_socket());
      skip_space();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect(']');
      break;
    }
    skip_space();
    if (pos_ != text_.size()) throw ParseError("trailing text in topology");
    return topology;
  }

 private:
  std::vector<int> parse_socket() {
    std::vector<int> cores;
    expect('[');
    while (true) {
      skip_space();
      const int first = parse_int();
      skip_space();
      if (text_.substr(pos_, 2) == "..") {
        pos_ += 2;
        skip_space();
        const int last = parse_int();
        if (last < first) throw ParseError("descending core range");
        for (int c = first; c <= last; ++c) cores.push_back(c);
      } else {
        cores.push_back(first);
      }
      skip_space();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect(']');
      return cores;
    }
  }

  int parse_int() {
    const auto start = pos_;
    while (pos_ < text_.size() &&
           std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
    if (start == pos_) throw ParseError("expected a core id in topology");
    return std::stoi(std::string(text_.substr(start, pos_ - start)));
  }

  void skip_space() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void expect(char c) {
    skip_space();
    if (peek() != c) {
      throw ParseError(std::string("expected '") + c + "' in topology");
    }
    ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

bool spans(const Topology& topology, const std::vector<int>& cores) {
  if (cores.empty()) return false;
  const int first = topology.socket_of(cores.front());
  return std::any_of(cores.begin(), cores.end(), [&](int c) {
    return topology.socket_of(c) != first;
  });
}

}  // namespace

Topology parse_topology(std::string_view text) {
  static const std::regex kShorthand(R"(\s*(\d+)\s*[xX]\s*(\d+)\s*)");
  const std::string s(text);
  std::smatch m;
  if (std::regex_match(s, m, kShorthand)) {
    return make_topology(std::stoi(m[1]), std::stoi(m[2]));
  }
  std::string_view body = text;
  if (const auto colon = body.find(':'); colon != std::string_view::npos) {
    const auto key = body.substr(0, colon);
    if (key.find("sockets") == std::string_view::npos) {
      throw ParseError("unknown topology key");
    }
    body.remove_prefix(colon + 1);
  }
  auto topology = ListParser(body).parse();
  validate(topology);
  return topology;
}

Topology load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open topology " + path.string());
  std::ostringstream text;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    text << line << ' ';
  }
  return parse_topology(text.str());
}

AllocationPlan AllocationPlan::for_topology(const Topology& topology) {
  validate(topology);
  AllocationPlan plan;
  for (const auto& socket : topology.sockets) {
    plan.free_cores.insert(socket.begin(), socket.end());
  }
  return plan;
}

int AllocationPlan::assigned_cores() const {
  int n = 0;
  for (const auto& [id, cores] : assignments) n += static_cast<int>(cores.size());
  return n;
}

int AllocationPlan::spanning_instances(const Topology& topology) const {
  return static_cast<int>(
      std::count_if(assignments.begin(), assignments.end(),
                    [&](const auto& kv) { return spans(topology, kv.second); }));
}

AllocationPlan allocate(const Topology& topology, AllocationPlan plan,
                        std::span<const CoreDemand> demands) {
  int requested = 0;
  for (const auto& d : demands) requested += d.threads;
  if (requested > static_cast<int>(plan.free_cores.size())) {
    throw InsufficientCoresError(
        "demand of " + std::to_string(requested) + " cores exceeds " +
        std::to_string(plan.free_cores.size()) + " free cores");
  }

  int spanning = plan.spanning_instances(topology);
  for (const auto& demand : demands) {
    if (demand.threads < 1) {
      throw ValidationError("instance " + demand.instance +
                            " must request at least one core");
    }
    if (plan.assignments.contains(demand.instance)) {
      throw ValidationError("instance " + demand.instance +
                            " already holds cores");
    }

    std::vector<int> cores;
    if (demand.pinned_cores) {
      cores = *demand.pinned_cores;
      if (static_cast<int>(cores.size()) != demand.threads) {
        throw ValidationError("pinned core list for " + demand.instance +
                              " does not match its thread count");
      }
      for (int c : cores) {
        if (!plan.free_cores.contains(c)) {
          throw InsufficientCoresError("pinned core " + std::to_string(c) +
                                       " for " + demand.instance +
                                       " is not free");
        }
      }
      if (std::set<int>(cores.begin(), cores.end()).size() != cores.size()) {
        throw ValidationError("pinned core list for " + demand.instance +
                              " repeats a core");
      }
    } else {
      // Free cores per socket, in ascending id order.
      std::vector<std::vector<int>> free(topology.sockets.size());
      for (std::size_t s = 0; s < topology.sockets.size(); ++s) {
        auto ids = topology.sockets[s];
        std::sort(ids.begin(), ids.end());
        for (int c : ids) {
          if (plan.free_cores.contains(c)) free[s].push_back(c);
        }
      }
      // Sockets by free cores descending, ties to the lower id.
      std::vector<std::size_t> order(free.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        return free[a].size() > free[b].size();
      });

      const auto need = static_cast<std::size_t>(demand.threads);
      if (free[order.front()].size() >= need) {
        const auto& src = free[order.front()];
        cores.assign(src.begin(), src.begin() + static_cast<long>(need));
      } else {
        if (spanning > 0) {
          throw InsufficientCoresError(
              "no single socket can host " + demand.instance +
              " and another instance already spans sockets");
        }
        for (auto s : order) {
          for (int c : free[s]) {
            if (cores.size() == need) break;
            cores.push_back(c);
          }
        }
        if (cores.size() < need) {
          throw InsufficientCoresError("not enough free cores for " +
                                       demand.instance);
        }
      }
    }
    if (spans(topology, cores)) ++spanning;
    for (int c : cores) plan.free_cores.erase(c);
    plan.assignments.emplace(demand.instance, std::move(cores));
  }
  return plan;
}

AllocationPlan release(AllocationPlan plan, const InstanceId& instance) {
  const auto it = plan.assignments.find(instance);
  if (it == plan.assignments.end()) {
    throw UnknownInstanceError("instance " + instance + " holds no cores");
  }
  plan.free_cores.insert(it->second.begin(), it->second.end());
  plan.assignments.erase(it);
  return plan;
}

void to_json(nlohmann::json& j, const AllocationPlan& plan) {
  j = nlohmann::json{{"assignments", plan.assignments},
                     {"free_cores", plan.free_cores}};
}

}  // namespace thinserve
