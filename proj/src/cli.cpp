#include "thinserve/cli.hpp"

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "json.hpp"
#include "thinserve/allocator.hpp"
#include "thinserve/errors.hpp"
#include "thinserve/optimizer.hpp"

namespace thinserve::cli {
namespace {

using nlohmann::json;

// Writes to --out when given, else to the caller's stream.
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      stream_ = &fallback;
    } else {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw ParseError("cannot write " + path);
      stream_ = file_.get();
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_ = nullptr;
};

InterferenceModel make_interference(const RunConfig& config) {
  const auto kind = parse_interference_kind(config.interference);
  auto curve = config.curve_path.empty()
                   ? MemoryLatencyCurve::default_curve()
                   : load_memory_curve(config.curve_path);
  return InterferenceModel::make(kind, config.downclock, std::move(curve));
}

Topology resolve_topology(const std::string& spec) {
  if (std::filesystem::is_regular_file(spec)) return load_topology(spec);
  return parse_topology(spec);
}

int cmd_optimize(const RunConfig& config, std::ostream& out) {
  const auto profile = load_profile(config.profile_path);
  OptimizerOptions options;
  options.strict_threads = config.strict_threads;

  // Independent solves run concurrently; output keeps the flag order.
  std::vector<std::future<Configuration>> solves;
  for (int batch : config.batches) {
    solves.push_back(std::async(std::launch::async, [&, batch] {
      return solve(profile, config.threads, batch, options);
    }));
  }
  json result = json::array();
  for (auto& s : solves) result.push_back(s.get());
  Output sink(config.out_path, out);
  *sink << (config.batches.size() == 1 ? result.front() : result).dump(2)
        << '\n';
  return kOk;
}

int cmd_simulate(const RunConfig& config, std::ostream& out) {
  const auto profile = load_profile(config.profile_path);
  const auto topology = resolve_topology(config.topology);
  ArrivalTrace trace;
  if (!config.trace_path.empty()) {
    trace = load_trace(config.trace_path);
  } else {
    auto generator = config.generator;
    generator.seed = config.seed;
    trace = generate_trace(generator);
  }

  auto options = config.simulation;
  options.batch_timeout = from_ms(config.batch_timeout_ms);
  options.estimator.reconfig_timeout = from_ms(config.reconfig_timeout_ms);
  options.startup_delay = from_ms(config.startup_delay_ms);
  options.scale_down_delay = from_ms(config.scale_down_delay_ms);
  options.optimizer.strict_threads = config.strict_threads;
  options.per_instance_bandwidth_gbps = config.bandwidth_per_instance_gbps;
  if (config.interference != "none") {
    options.interference = make_interference(config);
  }

  const auto report = run_trace(trace, profile, topology, options);
  {
    Output sink(config.out_path, out);
    *sink << summary_json(report).dump(2) << '\n';
  }
  if (!config.timeline_path.empty()) {
    Output sink(config.timeline_path, out);
    write_timeline(*sink, report);
  }
  return kOk;
}

int cmd_gap(const RunConfig& config, std::ostream& out) {
  const auto profile = load_profile(config.profile_path);
  OptimizerOptions options;
  options.strict_threads = config.strict_threads;
  const auto chosen =
      solve(profile, config.threads, config.batches.front(), options);
  const auto report = gap_report(profile, chosen, make_interference(config),
                                 config.bandwidth_per_instance_gbps);
  Output sink(config.out_path, out);
  *sink << json{{"interference", config.interference},
                {"expected_ms", report.expected_ms},
                {"adjusted_ms", report.adjusted_ms},
                {"gap_fraction", report.gap_fraction},
                {"factor", report.factor},
                {"config", chosen}}
               .dump(2)
        << '\n';
  return kOk;
}

int cmd_grid(const RunConfig& config, std::ostream& out) {
  if (config.threads < 1 || config.batch_exponent < 0 ||
      config.batch_exponent > 30) {
    throw ValidationError("grid needs -T >= 1 and 0 <= -n <= 30");
  }
  json result{
      {"T", config.threads},
      {"n", config.batch_exponent},
      {"grid_size", grid_size(config.threads, config.batch_exponent)},
      {"exhaustive_size",
       (std::int64_t{1} << config.batch_exponent) * config.threads}};
  if (!config.synth_out.empty()) {
    auto spec = config.synth;
    spec.max_threads = config.threads;
    spec.batch_exponent = config.batch_exponent;
    spec.seed = config.seed;
    const auto table = synthesize_profile(spec);
    save_profile(config.synth_out, table);
    result["profile"] = config.synth_out;
    result["entries"] = table.size();
  }
  Output sink(config.out_path, out);
  *sink << result.dump(2) << '\n';
  return kOk;
}

void add_interference_flags(CLI::App& cmd, RunConfig& c) {
  cmd.add_option("--interference", c.interference,
                 "Interference model: none|downclock|memory|both")
      ->check(CLI::IsMember({"none", "downclock", "memory", "both"}));
  cmd.add_option("--curve", c.curve_path,
                 "Memory curve CSV (bandwidth_gbps,latency_multiplier)");
  cmd.add_option("--bandwidth-per-instance", c.bandwidth_per_instance_gbps,
                 "Memory bandwidth of one instance in GB/s");
  cmd.add_option("--base-freq", c.downclock.base_freq_ghz,
                 "Nominal core frequency in GHz");
  cmd.add_option("--loaded-freq", c.downclock.loaded_freq_ghz,
                 "Frequency under sustained SIMD load in GHz");
  cmd.add_option("--simd-threshold", c.downclock.activation_threshold,
                 "Share of cores running SIMD that triggers downclocking");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err) {
  RunConfig c;
  CLI::App app{"Multi-instance CPU inference configuration and simulation"};
  app.set_config("--config", "", "key=value config file mirroring the flags");
  app.require_subcommand(1);

  auto* optimize = app.add_subcommand(
      "optimize", "Print the latency-minimizing configuration for <T, B>");
  optimize->add_option("-p,--profile", c.profile_path, "Profile CSV")
      ->required();
  optimize->add_option("-T,--threads", c.threads, "Thread budget")
      ->required()
      ->check(CLI::PositiveNumber);
  optimize->add_option("-B,--batch", c.batches,
                       "Batch size; repeat for several independent solves")
      ->required()
      ->check(CLI::PositiveNumber);
  optimize->add_flag("--strict", c.strict_threads,
                     "Use every thread (sum of i*t == T)");
  optimize->add_option("--out", c.out_path, "Write JSON here");

  auto* simulate = app.add_subcommand(
      "simulate", "Replay an arrival trace through the serving simulator");
  simulate->add_option("-p,--profile", c.profile_path, "Profile CSV")
      ->required();
  auto* trace_opt =
      simulate->add_option("--trace", c.trace_path, "Arrival CSV (timestamp_ms)");
  auto* rate_opt = simulate->add_option("--rate", c.generator.rate_rps,
                                        "Generated arrival rate (req/s)");
  simulate->add_option("--duration", c.generator.duration_s,
                       "Generated trace length (s)");
  simulate->add_option("--step-at", c.generator.step_at_s,
                       "Time of the rate step (s)");
  simulate->add_option("--step-rate", c.generator.step_rate_rps,
                       "Arrival rate after the step (req/s)");
  simulate->add_option("--jitter", c.generator.jitter,
                       "Arrival jitter as a fraction of the interval");
  trace_opt->excludes(rate_opt);
  simulate->add_option("--topology", c.topology,
                       "SxC, a socket list, or a topology file");
  simulate->add_option("--alpha", c.simulation.estimator.alpha,
                       "EWMA weight of the newest queue-depth sample");
  simulate->add_option("--mode-window", c.simulation.estimator.window,
                       "Number of recent estimates the mode is taken over");
  simulate->add_option("--reconfig-timeout-ms", c.reconfig_timeout_ms,
                       "Minimum interval between batch-size decisions");
  simulate->add_option("--timeout-trigger-fraction",
                       c.simulation.timeout_trigger_fraction,
                       "Share of timed-out dispatches needed to shrink B");
  simulate->add_option("--batch-timeout-ms", c.batch_timeout_ms,
                       "Aggregation timeout");
  simulate->add_option("--initial-batch", c.simulation.initial_batch,
                       "Batch size served at start");
  simulate->add_option("--startup-delay-ms", c.startup_delay_ms,
                       "Instance start-up time");
  simulate->add_option("--scale-down-delay-ms", c.scale_down_delay_ms,
                       "Background tear-down time of the old set");
  simulate->add_option("--dual-active-penalty",
                       c.simulation.dual_active_penalty,
                       "Latency multiplier while both sets are live");
  simulate->add_option("--pre-ms", c.simulation.pre_ms,
                       "Per-batch pre-processing time");
  simulate->add_option("--post-ms", c.simulation.post_ms,
                       "Per-batch post-processing time");
  simulate->add_flag("--no-reconfig{false}",
                     c.simulation.reconfiguration_enabled,
                     "Keep the initial configuration");
  simulate->add_flag("--no-oversubscription{false}",
                     c.simulation.allow_oversubscription,
                     "Reject reconfigurations that do not fit both sets");
  simulate->add_flag("--strict", c.strict_threads,
                     "Use every thread (sum of i*t == T)");
  simulate->add_option("--seed", c.seed, "Seed for generated arrivals");
  simulate->add_option("--out", c.out_path, "Write the JSON summary here");
  simulate->add_option("--timeline", c.timeline_path,
                       "Write the CSV timeline here (- for stdout)");
  add_interference_flags(*simulate, c);

  auto* gap = app.add_subcommand(
      "gap", "Expected versus interference-adjusted latency for <T, B>");
  gap->add_option("-p,--profile", c.profile_path, "Profile CSV")->required();
  gap->add_option("-T,--threads", c.threads, "Thread budget")
      ->required()
      ->check(CLI::PositiveNumber);
  gap->add_option("-B,--batch", c.batches, "Batch size")
      ->required()
      ->expected(1)
      ->check(CLI::PositiveNumber);
  gap->add_flag("--strict", c.strict_threads,
                "Use every thread (sum of i*t == T)");
  gap->add_option("--out", c.out_path, "Write JSON here");
  add_interference_flags(*gap, c);

  auto* grid = app.add_subcommand(
      "grid", "Profiling grid size; optionally write a synthetic profile");
  grid->add_option("-T,--threads", c.threads, "Largest thread count")
      ->required();
  grid->add_option("-n,--batch-exponent", c.batch_exponent,
                   "Largest batch is 2^n");
  grid->add_option("--synth-out", c.synth_out,
                   "Write a synthetic profile CSV here");
  grid->add_option("--model", c.synth.model_id, "Synthetic model id");
  grid->add_option("--base-ms", c.synth.base_latency_ms,
                   "Synthetic latency at t=1, b=1");
  grid->add_option("--parallel-fraction", c.synth.parallel_fraction,
                   "Amdahl parallel fraction");
  grid->add_option("--fixed-fraction", c.synth.fixed_fraction,
                   "Batch-independent share of the b=1 latency");
  grid->add_option("--batch-scaling", c.synth.batch_scaling,
                   "Exponent of the per-item batch cost");
  grid->add_option("--profile-jitter", c.synth.jitter,
                   "Per-row multiplicative jitter bound");
  grid->add_option("--seed", c.seed, "Seed for the synthetic jitter");
  grid->add_option("--out", c.out_path, "Write JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*optimize) {
      c.subcommand = "optimize";
      return cmd_optimize(c, out);
    }
    if (*simulate) {
      c.subcommand = "simulate";
      return cmd_simulate(c, out);
    }
    if (*gap) {
      c.subcommand = "gap";
      return cmd_gap(c, out);
    }
    c.subcommand = "grid";
    return cmd_grid(c, out);
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << '\n';
    return kInfeasible;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

}  // namespace thinserve::cli
