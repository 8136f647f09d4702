#include "thinserve/trace.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "thinserve/errors.hpp"
#include "thinserve/random.hpp"

namespace thinserve {

ArrivalTrace generate_trace(const TraceGenerator& g) {
  if (!(g.rate_rps > 0.0) || !(g.duration_s > 0.0)) {
    throw ValidationError("trace rate and duration must be > 0");
  }
  if (g.step_at_s && !(g.step_rate_rps > 0.0)) {
    throw ValidationError("step rate must be > 0");
  }
  if (!(g.jitter >= 0.0 && g.jitter < 1.0)) {
    throw ValidationError("trace jitter must lie in [0, 1)");
  }
  Rng rng(g.seed);
  ArrivalTrace trace;
  double t = 0.0;
  while (t < g.duration_s) {
    const bool stepped = g.step_at_s && t >= *g.step_at_s;
    const double interval = 1.0 / (stepped ? g.step_rate_rps : g.rate_rps);
    const double offset = (rng.uniform() - 0.5) * g.jitter * interval;
    trace.push_back(from_ms(std::max(0.0, t + offset) * 1e3));
    t += interval;
  }
  return trace;
}

ArrivalTrace parse_trace(std::istream& in) {
  ArrivalTrace trace;
  std::string line;
  bool saw_header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!saw_header) {
      if (line != "timestamp_ms") {
        throw ParseError("expected trace header `timestamp_ms`");
      }
      saw_header = true;
      continue;
    }
    std::istringstream row(line);
    double ms = 0.0;
    if (!(row >> ms) || !(row >> std::ws).eof()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": malformed timestamp");
    }
    const auto t = from_ms(ms);
    if (ms < 0.0 || (!trace.empty() && t < trace.back())) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": timestamps must be non-negative and sorted");
    }
    trace.push_back(t);
  }
  if (!saw_header) throw ParseError("trace is missing its header");
  return trace;
}

ArrivalTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trace " + path.string());
  return parse_trace(in);
}

void write_trace(std::ostream& out, const ArrivalTrace& trace) {
  out << "timestamp_ms\n" << std::fixed << std::setprecision(3);
  for (const auto t : trace) out << to_ms(t) << '\n';
}

}  // namespace thinserve
