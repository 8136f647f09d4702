#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "thinserve/allocator.hpp"
#include "thinserve/dispatcher.hpp"
#include "thinserve/estimator.hpp"
#include "thinserve/interference.hpp"
#include "thinserve/optimizer.hpp"
#include "thinserve/profile.hpp"
#include "thinserve/sim_time.hpp"
#include "thinserve/trace.hpp"

namespace thinserve {

// Active-passive reconfiguration phases. The only legal order is the cycle
// BatchEstimation -> PassiveScaleUp -> DualActive -> PassiveScaleDown.
enum class Phase { kBatchEstimation, kPassiveScaleUp, kDualActive, kPassiveScaleDown };

std::string_view phase_name(Phase phase);

enum class Lifecycle { kStarting, kActive, kDraining, kStopped };

std::string_view lifecycle_name(Lifecycle lifecycle);

struct WorkerInstance {
  InstanceId id;
  std::int64_t seq = 0;
  int threads = 1;
  // Configured slice size; 0 while the instance is not part of the routing
  // configuration.
  int batch = 0;
  std::vector<int> cores;
  Lifecycle lifecycle = Lifecycle::kStarting;
  // Which of the two instance sets (model versions) this belongs to.
  int set = 0;
  bool busy = false;
  std::int64_t dispatch = -1;
  std::vector<Request> in_flight;
};

struct SimulationOptions {
  int initial_batch = 8;
  SimTime batch_timeout = std::chrono::milliseconds(100);
  EstimatorOptions estimator;
  // Share of recent dispatches that must have been timeout-driven before the
  // controller accepts a smaller batch size.
  double timeout_trigger_fraction = 0.5;
  SimTime startup_delay = std::chrono::milliseconds(2500);
  SimTime scale_down_delay = std::chrono::milliseconds(2500);
  // Latency multiplier for batches dispatched while both sets are live.
  double dual_active_penalty = 2.5;
  double pre_ms = 0.0;
  double post_ms = 0.0;
  std::optional<InterferenceModel> interference;
  double per_instance_bandwidth_gbps = 3.0;
  bool reconfiguration_enabled = true;
  // When false both sets draw from one core pool, and an active-passive
  // reconfiguration that does not fit is rejected.
  bool allow_oversubscription = true;
  OptimizerOptions optimizer;
};

enum class ReconfigOutcome { kActivePassive, kWorkerScaling, kNoChange, kRejected };

struct DispatchRecord {
  std::int64_t id = 0;
  SimTime dispatched{0};
  SimTime completed{0};
  // Oldest request arrival in the batch.
  SimTime oldest_arrival{0};
  Phase phase = Phase::kBatchEstimation;
  std::string config;
  int requests = 0;
  bool partial = false;
  double service_ms = 0.0;
  // Mean end-to-end latency of the batch's requests, queueing included.
  double batch_latency_ms = 0.0;
};

struct ConfigChange {
  SimTime time{0};
  std::string kind;
  Configuration config;
};

struct ReconfigWindow {
  SimTime start{0};
  std::optional<SimTime> end;
};

struct RequestRecord {
  std::int64_t id = 0;
  SimTime arrival{0};
  SimTime completion{0};
  InstanceId instance;
};

struct RunReport {
  std::size_t arrived = 0;
  std::size_t completed = 0;
  std::size_t dropped = 0;
  int reconfigurations = 0;
  int active_passive_cycles = 0;
  int worker_scalings = 0;
  int rejected_reconfigurations = 0;
  std::vector<std::pair<SimTime, Phase>> phase_log;
  std::vector<ConfigChange> config_history;
  std::vector<ReconfigWindow> reconfig_windows;
  // Completion order.
  std::vector<DispatchRecord> dispatches;
  std::vector<RequestRecord> completions;
  AllocationPlan active_plan;
  AllocationPlan passive_plan;

  double mean_request_latency_ms() const;
  double request_latency_percentile_ms(double q) const;
  double max_service_ms() const;
  // Largest wait between consecutive dispatches while work was queued,
  // over dispatches inside reconfiguration windows.
  double max_reconfig_dispatch_gap_ms() const;
};

nlohmann::json summary_json(const RunReport& report);
// `time_ms,batch_latency_ms,phase,active_config`, one row per completed
// aggregated batch, in completion order.
void write_timeline(std::ostream& out, const RunReport& report);

// Single-threaded discrete-event simulation of the serving loop: arrivals,
// batch aggregation and partitioning, simulated workers, the batch-size
// estimator and the reconfiguration controller.
class Simulator {
 public:
  Simulator(ProfileTable profile, Topology topology, ArrivalTrace trace,
            SimulationOptions options);

  bool done() const { return events_.empty(); }
  SimTime now() const { return now_; }

  // Processes the earliest pending event.
  void step();
  void run();

  // Starts moving to `config`. Only legal in BatchEstimation with no worker
  // scaling in flight; otherwise returns kRejected.
  ReconfigOutcome reconfigure(const Configuration& config);

  Phase phase() const { return phase_; }
  const Configuration& active_config() const { return config_; }
  const std::map<std::int64_t, WorkerInstance>& instances() const {
    return instances_;
  }
  std::size_t pending() const { return pending_.size(); }
  const EstimatorState& estimator() const { return estimator_; }
  int total_threads() const { return total_threads_; }

  RunReport report() const;

 private:
  enum class EventKind {
    kArrival,
    kBatchTimeout,
    kSliceDone,
    kInstancesReady,
    kScaleUpReady,
    kScaleDownDone,
    kEstimatorTick,
  };
  struct Event {
    SimTime time;
    std::uint64_t seq;
    EventKind kind;
    std::int64_t arg;
    friend bool operator>(const Event& a, const Event& b) {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };
  struct InFlightDispatch {
    DispatchRecord record;
    int outstanding = 0;
    double latency_sum_ms = 0.0;
  };
  struct Scaling {
    Configuration target;
    std::vector<std::int64_t> added;
    std::vector<std::int64_t> removed;
  };

  void schedule(SimTime at, EventKind kind, std::int64_t arg = 0);
  void set_phase(Phase phase);
  AllocationPlan& plan_for(int set);
  std::int64_t spawn(int set, int threads, std::vector<int> cores,
                     Lifecycle lifecycle);
  void start_instances(const Configuration& config, int set);
  void assign_slots(const Configuration& config, int set);
  void retire(WorkerInstance& instance);
  void on_stopped(WorkerInstance& instance);
  void check_drained();
  std::vector<DispatchSlot> routing_slots() const;
  double service_ms(const WorkerInstance& instance) const;
  void try_dispatch();
  void complete_slice(std::int64_t seq);
  void estimator_tick();
  bool has_future_work() const;
  ReconfigOutcome start_worker_scaling(const Configuration& config);
  ReconfigOutcome start_active_passive(const Configuration& config);
  void finish_worker_scaling();

  ProfileTable profile_;
  Topology topology_;
  ArrivalTrace trace_;
  SimulationOptions options_;
  int total_threads_;
  ConfigCache cache_;

  SimTime now_{0};
  std::uint64_t next_seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::size_t next_arrival_ = 0;
  std::optional<SimTime> timeout_check_;

  std::deque<Request> pending_;
  std::map<std::int64_t, WorkerInstance> instances_;
  std::int64_t next_instance_ = 0;
  std::array<AllocationPlan, 2> plans_;
  int routing_set_ = 0;
  Configuration config_;
  std::optional<Configuration> next_config_;
  std::optional<Scaling> scaling_;
  Phase phase_ = Phase::kBatchEstimation;

  EstimatorState estimator_;
  std::deque<bool> recent_partial_;

  std::int64_t next_dispatch_ = 0;
  std::map<std::int64_t, InFlightDispatch> in_flight_;

  RunReport report_;
};

RunReport run_trace(const ArrivalTrace& trace, const ProfileTable& profile,
                    const Topology& topology,
                    const SimulationOptions& options = {});

}  // namespace thinserve
