#include "thinserve/simulator.hpp"

#include <algorithm>
#include <set>

#include "thinserve/errors.hpp"

namespace thinserve {

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::kBatchEstimation:
      return "BatchEstimation";
    case Phase::kPassiveScaleUp:
      return "PassiveScaleUp";
    case Phase::kDualActive:
      return "DualActive";
    case Phase::kPassiveScaleDown:
      return "PassiveScaleDown";
  }
  return "?";
}

std::string_view lifecycle_name(Lifecycle lifecycle) {
  switch (lifecycle) {
    case Lifecycle::kStarting:
      return "Starting";
    case Lifecycle::kActive:
      return "Active";
    case Lifecycle::kDraining:
      return "Draining";
    case Lifecycle::kStopped:
      return "Stopped";
  }
  return "?";
}

Simulator::Simulator(ProfileTable profile, Topology topology,
                     ArrivalTrace trace, SimulationOptions options)
    : profile_(std::move(profile)),
      topology_(std::move(topology)),
      trace_(std::move(trace)),
      options_(std::move(options)) {
  validate(topology_);
  total_threads_ = topology_.total_cores();
  if (options_.initial_batch < 1) {
    throw ValidationError("initial batch must be >= 1");
  }
  if (options_.batch_timeout.count() < 0) {
    throw ValidationError("batch timeout must be >= 0");
  }
  if (!(options_.dual_active_penalty > 0.0)) {
    throw ValidationError("dual-active penalty must be > 0");
  }
  if (!(options_.timeout_trigger_fraction >= 0.0 &&
        options_.timeout_trigger_fraction <= 1.0)) {
    throw ValidationError("timeout trigger fraction must lie in [0, 1]");
  }
  if (options_.pre_ms < 0.0 || options_.post_ms < 0.0) {
    throw ValidationError("stage overheads must be >= 0");
  }
  if (options_.reconfiguration_enabled &&
      options_.estimator.reconfig_timeout.count() <= 0) {
    throw ValidationError("reconfiguration timeout must be > 0");
  }
  if (!std::is_sorted(trace_.begin(), trace_.end())) {
    throw ValidationError("arrival trace must be sorted by timestamp");
  }

  auto estimator_options = options_.estimator;
  if (estimator_options.max_batch == 0) {
    estimator_options.max_batch = profile_.max_batch();
  }
  estimator_ = make_estimator(estimator_options, options_.initial_batch);

  plans_[0] = AllocationPlan::for_topology(topology_);
  plans_[1] = plans_[0];

  config_ = solve_cached(cache_, profile_, total_threads_,
                         options_.initial_batch, options_.optimizer);
  start_instances(config_, routing_set_);
  for (auto& [seq, instance] : instances_) instance.lifecycle = Lifecycle::kActive;
  assign_slots(config_, routing_set_);

  report_.phase_log.emplace_back(SimTime{0}, phase_);
  report_.config_history.push_back({SimTime{0}, "initial", config_});

  if (!trace_.empty()) schedule(trace_.front(), EventKind::kArrival);
  if (options_.reconfiguration_enabled) {
    schedule(options_.estimator.reconfig_timeout, EventKind::kEstimatorTick);
  }
}

void Simulator::schedule(SimTime at, EventKind kind, std::int64_t arg) {
  events_.push({at, next_seq_++, kind, arg});
}

void Simulator::set_phase(Phase phase) {
  phase_ = phase;
  report_.phase_log.emplace_back(now_, phase);
}

AllocationPlan& Simulator::plan_for(int set) {
  return plans_[options_.allow_oversubscription ? set : 0];
}

std::int64_t Simulator::spawn(int set, int threads, std::vector<int> cores,
                              Lifecycle lifecycle) {
  const auto seq = next_instance_++;
  WorkerInstance instance;
  instance.id = "w" + std::to_string(seq);
  instance.seq = seq;
  instance.threads = threads;
  instance.cores = std::move(cores);
  instance.lifecycle = lifecycle;
  instance.set = set;
  instances_.emplace(seq, std::move(instance));
  return seq;
}

void Simulator::start_instances(const Configuration& config, int set) {
  std::vector<CoreDemand> demands;
  std::vector<int> threads;
  for (const auto& g : config.groups) {
    for (int k = 0; k < g.instances; ++k) {
      const auto seq = next_instance_ + static_cast<std::int64_t>(demands.size());
      demands.push_back({"w" + std::to_string(seq), g.threads, std::nullopt});
      threads.push_back(g.threads);
    }
  }
  auto& plan = plan_for(set);
  plan = allocate(topology_, plan, demands);
  for (std::size_t k = 0; k < demands.size(); ++k) {
    spawn(set, threads[k], plan.assignments.at(demands[k].instance),
          Lifecycle::kStarting);
  }
}

void Simulator::assign_slots(const Configuration& config, int set) {
  std::vector<WorkerInstance*> live;
  for (auto& [seq, instance] : instances_) {
    if (instance.set == set && (instance.lifecycle == Lifecycle::kActive ||
                                instance.lifecycle == Lifecycle::kStarting)) {
      instance.batch = 0;
      live.push_back(&instance);
    }
  }
  for (const auto& g : config.groups) {
    for (int k = 0; k < g.instances; ++k) {
      const auto it = std::find_if(live.begin(), live.end(), [&](auto* w) {
        return w->batch == 0 && w->threads == g.threads;
      });
      if (it == live.end()) {
        throw StateError("no instance left for group " + describe(config));
      }
      (*it)->batch = g.batch;
    }
  }
}

void Simulator::retire(WorkerInstance& instance) {
  instance.batch = 0;
  if (instance.busy) {
    instance.lifecycle = Lifecycle::kDraining;
  } else {
    instance.lifecycle = Lifecycle::kStopped;
    on_stopped(instance);
  }
}

void Simulator::on_stopped(WorkerInstance& instance) {
  auto& plan = plan_for(instance.set);
  if (plan.assignments.contains(instance.id)) {
    plan = release(plan, instance.id);
  }
}

void Simulator::check_drained() {
  if (phase_ != Phase::kDualActive) return;
  const int old_set = 1 - routing_set_;
  const bool drained = std::all_of(
      instances_.begin(), instances_.end(), [&](const auto& kv) {
        return kv.second.set != old_set ||
               kv.second.lifecycle == Lifecycle::kStopped;
      });
  if (!drained) return;
  set_phase(Phase::kPassiveScaleDown);
  schedule(now_ + options_.scale_down_delay, EventKind::kScaleDownDone);
}

std::vector<DispatchSlot> Simulator::routing_slots() const {
  std::vector<const WorkerInstance*> live;
  for (const auto& [seq, instance] : instances_) {
    if (instance.set == routing_set_ &&
        instance.lifecycle == Lifecycle::kActive && instance.batch > 0) {
      live.push_back(&instance);
    }
  }
  // Canonical group order: threads desc, batch desc, then creation order.
  std::stable_sort(live.begin(), live.end(), [](auto* a, auto* b) {
    if (a->threads != b->threads) return a->threads > b->threads;
    return a->batch > b->batch;
  });
  std::vector<DispatchSlot> slots;
  for (const auto* w : live) slots.push_back({w->id, w->threads, w->batch});
  return slots;
}

double Simulator::service_ms(const WorkerInstance& instance) const {
  const auto latency = profile_.lookup({instance.threads, instance.batch});
  if (!latency) {
    throw UnknownKeyError("instance " + instance.id +
                          " runs an unprofiled shape");
  }
  double factor = 1.0;
  if (phase_ == Phase::kDualActive) factor *= options_.dual_active_penalty;
  if (options_.interference) {
    InterferenceContext context;
    int threads = 0;
    context.active_instances = 0;
    for (const auto& [seq, w] : instances_) {
      if (w.set == routing_set_ && w.lifecycle == Lifecycle::kActive &&
          w.batch > 0) {
        ++context.active_instances;
        threads += w.threads;
      }
    }
    context.per_instance_bandwidth_gbps = options_.per_instance_bandwidth_gbps;
    context.simd_fraction = static_cast<double>(threads) / total_threads_;
    factor *= penalty(*options_.interference, context);
  }
  return options_.pre_ms + *latency * factor + options_.post_ms;
}

void Simulator::try_dispatch() {
  if (pending_.empty()) return;
  bool any = false;
  for (const auto& [seq, w] : instances_) {
    if (w.set != routing_set_ || w.lifecycle != Lifecycle::kActive ||
        w.batch == 0) {
      continue;
    }
    if (w.busy) return;
    any = true;
  }
  if (!any) return;

  const auto slots = routing_slots();
  auto batches = aggregate(pending_, config_.total_batch,
                           options_.batch_timeout, now_, slots);
  if (!batches) {
    const auto at = pending_.front().arrival + options_.batch_timeout;
    if (at > now_ && timeout_check_ != at) {
      timeout_check_ = at;
      schedule(at, EventKind::kBatchTimeout);
    }
    return;
  }

  estimator_ = observe(estimator_, static_cast<std::int64_t>(pending_.size()));

  int count = 0;
  for (const auto& b : *batches) count += static_cast<int>(b.requests.size());
  const bool partial = count < config_.total_batch;
  recent_partial_.push_back(partial);
  while (recent_partial_.size() > estimator_.window) recent_partial_.pop_front();

  InFlightDispatch dispatch;
  auto& record = dispatch.record;
  record.id = next_dispatch_++;
  record.dispatched = now_;
  record.oldest_arrival = pending_.front().arrival;
  record.phase = phase_;
  record.config = describe(config_);
  record.requests = count;
  record.partial = partial;
  pending_.erase(pending_.begin(), pending_.begin() + count);

  std::map<InstanceId, std::int64_t> by_id;
  for (const auto& [seq, w] : instances_) by_id.emplace(w.id, seq);
  for (auto& batch : *batches) {
    auto& instance = instances_.at(by_id.at(batch.target));
    const double service = service_ms(instance);
    record.service_ms = std::max(record.service_ms, service);
    instance.busy = true;
    instance.dispatch = record.id;
    instance.in_flight = std::move(batch.requests);
    ++dispatch.outstanding;
    schedule(now_ + from_ms(service), EventKind::kSliceDone, instance.seq);
  }
  in_flight_.emplace(record.id, std::move(dispatch));
}

void Simulator::complete_slice(std::int64_t seq) {
  auto& instance = instances_.at(seq);
  auto& dispatch = in_flight_.at(instance.dispatch);
  for (const auto& r : instance.in_flight) {
    report_.completions.push_back({r.id, r.arrival, now_, instance.id});
    dispatch.latency_sum_ms += to_ms(now_ - r.arrival);
  }
  if (--dispatch.outstanding == 0) {
    auto record = dispatch.record;
    record.completed = now_;
    record.batch_latency_ms = dispatch.latency_sum_ms / record.requests;
    report_.dispatches.push_back(std::move(record));
    in_flight_.erase(instance.dispatch);
  }
  instance.busy = false;
  instance.dispatch = -1;
  instance.in_flight.clear();
  if (instance.lifecycle == Lifecycle::kDraining) {
    instance.lifecycle = Lifecycle::kStopped;
    on_stopped(instance);
  }
  check_drained();
}

bool Simulator::has_future_work() const {
  return next_arrival_ < trace_.size() || !pending_.empty() ||
         !in_flight_.empty() || phase_ != Phase::kBatchEstimation ||
         scaling_.has_value();
}

void Simulator::estimator_tick() {
  if (phase_ == Phase::kBatchEstimation && !scaling_) {
    auto decision = should_reconfigure(std::move(estimator_), now_);
    estimator_ = std::move(decision.state);
    if (decision.new_batch) {
      const int batch = *decision.new_batch;
      bool accept = true;
      if (batch < estimator_.current_batch) {
        // Shrinking is only worth it when batches keep timing out.
        const auto partial = std::count(recent_partial_.begin(),
                                        recent_partial_.end(), true);
        accept = !recent_partial_.empty() &&
                 static_cast<double>(partial) / recent_partial_.size() >=
                     options_.timeout_trigger_fraction;
      }
      if (accept) {
        try {
          reconfigure(solve_cached(cache_, profile_, total_threads_, batch,
                                   options_.optimizer));
        } catch (const InfeasibleError&) {
          // Keep serving with the current configuration.
        }
      }
    }
  }
  if (has_future_work()) {
    schedule(now_ + options_.estimator.reconfig_timeout,
             EventKind::kEstimatorTick);
  }
}

ReconfigOutcome Simulator::reconfigure(const Configuration& config) {
  if (phase_ != Phase::kBatchEstimation || scaling_) {
    ++report_.rejected_reconfigurations;
    return ReconfigOutcome::kRejected;
  }
  objective(profile_, config);
  if (config.batch_sum() != config.total_batch || config.total_batch < 1) {
    throw ValidationError("configuration batch sum does not match its B");
  }
  if (config.used_threads() > total_threads_) {
    throw ValidationError("configuration needs " +
                          std::to_string(config.used_threads()) +
                          " threads but the topology has " +
                          std::to_string(total_threads_));
  }
  if (config.groups == config_.groups) return ReconfigOutcome::kNoChange;

  std::set<int> old_threads;
  std::set<int> new_threads;
  for (const auto& g : config_.groups) old_threads.insert(g.threads);
  for (const auto& g : config.groups) new_threads.insert(g.threads);

  auto outcome = ReconfigOutcome::kRejected;
  if (std::includes(old_threads.begin(), old_threads.end(),
                    new_threads.begin(), new_threads.end())) {
    outcome = start_worker_scaling(config);
  }
  if (outcome == ReconfigOutcome::kRejected) {
    outcome = start_active_passive(config);
  }
  if (outcome == ReconfigOutcome::kRejected) {
    ++report_.rejected_reconfigurations;
    return outcome;
  }
  estimator_ = commit_batch(std::move(estimator_), config.total_batch);
  ++report_.reconfigurations;
  return outcome;
}

ReconfigOutcome Simulator::start_worker_scaling(const Configuration& config) {
  std::map<int, std::vector<std::int64_t>> live_by_threads;
  for (const auto& [seq, w] : instances_) {
    if (w.set == routing_set_ && w.lifecycle == Lifecycle::kActive) {
      live_by_threads[w.threads].push_back(seq);
    }
  }
  std::map<int, int> wanted;
  for (const auto& g : config.groups) wanted[g.threads] += g.instances;

  std::vector<std::int64_t> removed;
  std::vector<CoreDemand> demands;
  for (const auto& [threads, seqs] : live_by_threads) {
    const int keep = wanted.contains(threads) ? wanted.at(threads) : 0;
    // Newest instances go first.
    for (int k = static_cast<int>(seqs.size()) - 1; k >= keep; --k) {
      removed.push_back(seqs[k]);
    }
  }
  for (const auto& [threads, count] : wanted) {
    const int have = live_by_threads.contains(threads)
                         ? static_cast<int>(live_by_threads.at(threads).size())
                         : 0;
    for (int k = have; k < count; ++k) {
      const auto seq = next_instance_ + static_cast<std::int64_t>(demands.size());
      demands.push_back({"w" + std::to_string(seq), threads, std::nullopt});
    }
  }

  if (demands.empty()) {
    for (auto seq : removed) retire(instances_.at(seq));
    config_ = config;
    assign_slots(config_, routing_set_);
    report_.config_history.push_back({now_, "worker-scaling", config_});
    report_.reconfig_windows.push_back({now_, now_});
    ++report_.worker_scalings;
    return ReconfigOutcome::kWorkerScaling;
  }

  auto& plan = plan_for(routing_set_);
  try {
    plan = allocate(topology_, plan, demands);
  } catch (const InsufficientCoresError&) {
    // Cores are held by instances that only go away after the switch.
    return ReconfigOutcome::kRejected;
  }
  Scaling scaling{config, {}, removed};
  for (const auto& d : demands) {
    scaling.added.push_back(spawn(routing_set_, d.threads,
                                  plan.assignments.at(d.instance),
                                  Lifecycle::kStarting));
  }
  scaling_ = std::move(scaling);
  report_.reconfig_windows.push_back({now_, std::nullopt});
  ++report_.worker_scalings;
  schedule(now_ + options_.startup_delay, EventKind::kScaleUpReady);
  return ReconfigOutcome::kWorkerScaling;
}

void Simulator::finish_worker_scaling() {
  for (auto seq : scaling_->added) {
    instances_.at(seq).lifecycle = Lifecycle::kActive;
  }
  for (auto seq : scaling_->removed) retire(instances_.at(seq));
  config_ = scaling_->target;
  assign_slots(config_, routing_set_);
  report_.config_history.push_back({now_, "worker-scaling", config_});
  report_.reconfig_windows.back().end = now_;
  scaling_.reset();
}

ReconfigOutcome Simulator::start_active_passive(const Configuration& config) {
  const int passive = 1 - routing_set_;
  try {
    start_instances(config, passive);
  } catch (const InsufficientCoresError&) {
    return ReconfigOutcome::kRejected;
  }
  next_config_ = config;
  set_phase(Phase::kPassiveScaleUp);
  report_.reconfig_windows.push_back({now_, std::nullopt});
  ++report_.active_passive_cycles;
  schedule(now_ + options_.startup_delay, EventKind::kInstancesReady);
  return ReconfigOutcome::kActivePassive;
}

void Simulator::step() {
  if (events_.empty()) throw StateError("step on an empty event queue");
  const auto event = events_.top();
  events_.pop();
  now_ = std::max(now_, event.time);

  switch (event.kind) {
    case EventKind::kArrival: {
      pending_.push_back(
          {static_cast<std::int64_t>(next_arrival_), trace_[next_arrival_],
           std::nullopt});
      ++next_arrival_;
      if (next_arrival_ < trace_.size()) {
        schedule(trace_[next_arrival_], EventKind::kArrival);
      }
      break;
    }
    case EventKind::kBatchTimeout:
      if (timeout_check_ == now_) timeout_check_.reset();
      break;
    case EventKind::kSliceDone:
      complete_slice(event.arg);
      break;
    case EventKind::kInstancesReady: {
      const int passive = 1 - routing_set_;
      for (auto& [seq, w] : instances_) {
        if (w.set == passive && w.lifecycle == Lifecycle::kStarting) {
          w.lifecycle = Lifecycle::kActive;
        }
      }
      const int old_set = routing_set_;
      routing_set_ = passive;
      config_ = *next_config_;
      next_config_.reset();
      assign_slots(config_, routing_set_);
      set_phase(Phase::kDualActive);
      report_.config_history.push_back({now_, "active-passive", config_});
      for (auto& [seq, w] : instances_) {
        if (w.set == old_set && w.lifecycle != Lifecycle::kStopped) retire(w);
      }
      check_drained();
      break;
    }
    case EventKind::kScaleUpReady:
      finish_worker_scaling();
      break;
    case EventKind::kScaleDownDone: {
      const int old_set = 1 - routing_set_;
      std::erase_if(instances_, [&](const auto& kv) {
        return kv.second.set == old_set &&
               kv.second.lifecycle == Lifecycle::kStopped;
      });
      set_phase(Phase::kBatchEstimation);
      report_.reconfig_windows.back().end = now_;
      break;
    }
    case EventKind::kEstimatorTick:
      estimator_tick();
      break;
  }
  // Stopped worker-scaling leftovers are dropped once idle.
  std::erase_if(instances_, [&](const auto& kv) {
    return kv.second.set == routing_set_ &&
           kv.second.lifecycle == Lifecycle::kStopped;
  });
  try_dispatch();
}

void Simulator::run() {
  while (!done()) step();
}

RunReport Simulator::report() const {
  RunReport report = report_;
  report.arrived = next_arrival_;
  report.completed = report.completions.size();
  report.dropped = done() ? report.arrived - report.completed : 0;
  report.active_plan = plans_[options_.allow_oversubscription ? routing_set_ : 0];
  if (options_.allow_oversubscription) {
    report.passive_plan = plans_[1 - routing_set_];
  }
  return report;
}

RunReport run_trace(const ArrivalTrace& trace, const ProfileTable& profile,
                    const Topology& topology,
                    const SimulationOptions& options) {
  Simulator sim(profile, topology, trace, options);
  sim.run();
  return sim.report();
}

}  // namespace thinserve
