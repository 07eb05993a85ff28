#include "bcsim/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "bcsim/kv.hpp"
#include "bcsim/pi_baseline.hpp"

namespace bcsim {

double StepSchedule::at(double t) const {
  double v = initial;
  for (const auto& [time, value] : steps) {
    if (t >= time) v = value;
    else break;
  }
  return v;
}

void StepSchedule::validate(double duration) const {
  double prev = -1.0;
  for (const auto& [time, value] : steps) {
    if (!(time > prev) || time < 0.0 || time > duration) {
      throw std::invalid_argument(
          "schedule breakpoints must be strictly increasing within the scenario");
    }
    if (!std::isfinite(value)) {
      throw std::invalid_argument("schedule values must be finite");
    }
    prev = time;
  }
}

void Scenario::validate() const {
  if (!(duration > 0.0)) throw std::invalid_argument("scenario duration must be positive");
  v_ref.validate(duration);
  load_resistance.validate(duration);
  source_voltage.validate(duration);
}

std::vector<Scenario> builtin_scenarios() {
  ConverterParams nominal;
  const ConverterState settled =
      steady_state(duty_for_voltage(200.0, nominal), nominal);

  Scenario startup;
  startup.name = "startup";
  startup.duration = 0.050;
  startup.initial_state = ConverterState{0.0, 0.0};
  startup.v_ref.initial = 200.0;
  startup.load_resistance.initial = 80.0;
  startup.source_voltage.initial = 60.0;

  Scenario load_step;
  load_step.name = "load_step";
  load_step.duration = 0.075;
  load_step.initial_state = settled;
  load_step.starts_settled = true;
  load_step.v_ref.initial = 200.0;
  load_step.load_resistance.initial = 80.0;
  load_step.load_resistance.steps = {{0.025, 200.0}};
  load_step.source_voltage.initial = 60.0;

  Scenario input_step;
  input_step.name = "input_step";
  input_step.duration = 0.075;
  input_step.initial_state = settled;
  input_step.starts_settled = true;
  input_step.v_ref.initial = 200.0;
  input_step.load_resistance.initial = 80.0;
  input_step.source_voltage.initial = 60.0;
  input_step.source_voltage.steps = {{0.025, 54.0}};

  return {startup, load_step, input_step};
}

Scenario find_scenario(const std::string& name) {
  for (const Scenario& s : builtin_scenarios()) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("unknown scenario: " + name +
                              " (expected startup, load_step or input_step)");
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  out << "t,i_L,v_o,duty,v_ref,v_s,R,U\n";
  for (const TraceRow& r : trace) {
    out << format_double(r.t) << ',' << format_double(r.inductor_current) << ','
        << format_double(r.output_voltage) << ',' << format_double(r.duty) << ','
        << format_double(r.v_ref) << ',' << format_double(r.v_s) << ','
        << format_double(r.load_resistance) << ',' << format_double(r.utility)
        << '\n';
  }
  if (!out) throw std::runtime_error("short write on trace file: " + path);
}

std::vector<TraceRow> read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trace file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "t,i_L,v_o,duty,v_ref,v_s,R,U") {
    throw std::runtime_error("unexpected trace header in " + path);
  }
  std::vector<TraceRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    double v[8];
    for (int k = 0; k < 8; ++k) {
      if (!std::getline(ss, cell, ',')) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": expected 8 columns");
      }
      v[k] = parse_double(cell, path + ":" + std::to_string(lineno));
    }
    TraceRow r;
    r.t = v[0];
    r.inductor_current = v[1];
    r.output_voltage = v[2];
    r.duty = v[3];
    r.v_ref = v[4];
    r.v_s = v[5];
    r.load_resistance = v[6];
    r.utility = v[7];
    rows.push_back(r);
  }
  return rows;
}

}  // namespace bcsim
