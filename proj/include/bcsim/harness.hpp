#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bcsim/dhp.hpp"
#include "bcsim/pi_baseline.hpp"
#include "bcsim/scenario.hpp"

namespace bcsim {

// Transient quality figures over a trace window. All voltage comparisons are
// against the per-row reference, so metrics stay meaningful across reference
// steps inside the window. Percentages are of the reference.
struct Metrics {
  // Time from the window start until the output enters the +-2% band and
  // stays there for the rest of the window; infinity when it never does.
  double settling_time = 0.0;  // [s]
  double overshoot = 0.0;      // [%], max positive excursion, floored at 0
  double undershoot = 0.0;     // [%], max negative excursion, floored at 0
  double peak_deviation = 0.0; // [%], max absolute excursion
  // Mean absolute voltage error over the final tenth of the window.
  double steady_state_error = 0.0;  // [V]
  double mean_utility = 0.0;
  // Peak-to-peak swing in the last quarter at least 90% of the swing in the
  // quarter before it, and bigger than 0.5% of the reference: the response
  // is ringing instead of converging.
  bool oscillatory = false;
};

// Only rows with t >= t_from participate; pass the disturbance time to
// score a step response. Throws when the window is empty.
Metrics compute_metrics(const std::vector<TraceRow>& trace, double t_from = 0.0);

// Earliest schedule breakpoint, or zero when the scenario has none. This is
// the natural metrics window start for the step scenarios.
double disturbance_time(const Scenario& scenario);

// Closed-loop rollout under the PI baseline. For scenarios that start
// settled the integrator is pre-loaded with the value that holds the
// operating point, mirroring a regulator that has been running. Utility is
// recorded with the same weights as the learning controller for
// comparability.
std::vector<TraceRow> run_pi_scenario(const Scenario& scenario,
                                      const PIGains& gains,
                                      const ConverterParams& base_params,
                                      const UtilityWeights& weights,
                                      const FeatureScaling& scaling);

// Rollout under a frozen controller; networks are copied, nothing learns.
std::vector<TraceRow> run_frozen_scenario(const DhpController& controller,
                                          const Scenario& scenario,
                                          const ConverterParams& base_params,
                                          const DhpConfig& config);

struct ControllerResult {
  std::string controller;
  std::string scenario;
  Metrics metrics;
};

// Side-by-side table over one scenario, one line per metric with the winner
// named. Rejects fewer than two entries or mixed scenarios.
std::string compare_report(const std::vector<ControllerResult>& results);

// Scalar linear-quadratic plant used to validate the learning rules against
// closed-form optimal control: x' = a x + b u, U = q x^2 + r u^2.
struct LqrPlant {
  double a = 0.9;
  double b = 0.5;
  double q = 1.0;
  double r = 1.0;
  double gamma = 1.0;
};

struct RiccatiSolution {
  double p = 0.0;  // value coefficient, J*(x) = p x^2
  double k = 0.0;  // optimal feedback, u = -k x
};

// Fixed-point iteration on p = q + gamma a^2 p r / (r + gamma b^2 p) until
// |dp| <= 1e-12; k = gamma a b p / (r + gamma b^2 p).
RiccatiSolution riccati_solve(const LqrPlant& plant);

struct LqrTrainResult {
  Network critic;  // 1 -> 1, costate estimate, should approach 2 p x
  Network action;  // 1 -> 1 logistic squashed to (-u_max, u_max)
  double u_max = 3.0;
};

// Full training pass on the scalar plant with exact Jacobians: critic-only
// sweeps first (policy frozen), then joint per-sample updates, states drawn
// uniformly in +-x_max. Uses the same update rules as the converter loop,
// which is the point: their fixed point must match the algebraic optimum.
LqrTrainResult train_lqr_dhp(const LqrPlant& plant, int pretrain_samples,
                             int online_samples, double x_max,
                             std::uint64_t seed);

}  // namespace bcsim
