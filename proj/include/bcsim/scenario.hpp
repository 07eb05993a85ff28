#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bcsim/converter.hpp"

namespace bcsim {

// Piecewise-constant schedule: value is `initial` until the first breakpoint,
// then each breakpoint's value from its time onward.
struct StepSchedule {
  double initial = 0.0;
  std::vector<std::pair<double, double>> steps;  // (time [s], value)

  double at(double t) const;
  void validate(double duration) const;
};

struct Scenario {
  std::string name;
  double duration = 0.05;  // [s]
  ConverterState initial_state;
  // Pre-settled scenarios start at the operating point; controllers with
  // internal state may align to it (the PI integrator is pre-loaded).
  bool starts_settled = false;
  StepSchedule v_ref;
  StepSchedule load_resistance;
  StepSchedule source_voltage;

  void validate() const;
};

// The three benchmark cases: start-up at nominal load, a 80->200 ohm load
// step, and a 60->54 V source step (both steps at 25 ms after a settled
// start).
std::vector<Scenario> builtin_scenarios();
Scenario find_scenario(const std::string& name);

// One row per control period. lambda carries the critic estimate during DHP
// runs and stays zero otherwise; it is not part of the CSV format.
struct TraceRow {
  double t = 0.0;
  double inductor_current = 0.0;
  double output_voltage = 0.0;
  double duty = 0.0;
  double v_ref = 0.0;
  double v_s = 0.0;
  double load_resistance = 0.0;
  double utility = 0.0;
  Eigen::Vector4d lambda = Eigen::Vector4d::Zero();
};

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);
std::vector<TraceRow> read_trace_csv(const std::string& path);

}  // namespace bcsim
