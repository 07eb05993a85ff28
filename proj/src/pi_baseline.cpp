#include "bcsim/pi_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

#include <Eigen/Dense>

namespace bcsim {
namespace {

// Averaged small-signal control-to-output magnitude |G_vd(j w)| at the CCM
// operating point, series resistance included (it supplies the physical
// damping; the ideal formulas would overstate the resonant peak).
double control_to_output_gain(const ConverterParams& p, double duty, double w) {
  const ConverterState eq = steady_state(duty, p);
  const double u = 1.0 - duty;
  Eigen::Matrix2cd m;
  const std::complex<double> jw(0.0, w);
  m(0, 0) = jw + p.inductor_resistance / p.inductance;
  m(0, 1) = u / p.inductance;
  m(1, 0) = -u / p.capacitance;
  m(1, 1) = jw + 1.0 / (p.load_resistance * p.capacitance);
  Eigen::Vector2cd b;
  b(0) = eq.output_voltage / p.inductance;
  b(1) = -eq.inductor_current / p.capacitance;
  const Eigen::Vector2cd x = m.fullPivLu().solve(b);
  return std::abs(x(1));
}

}  // namespace

void PIGains::validate() const {
  if (!(duty_min >= 0.0 && duty_min < duty_max && duty_max <= 1.0)) {
    throw std::invalid_argument("duty bounds must satisfy 0 <= min < max <= 1");
  }
  if (!(k_p >= 0.0) || !(k_i >= 0.0) || !std::isfinite(feedforward_duty)) {
    throw std::invalid_argument("PI gains must be non-negative and finite");
  }
}

PIDesign small_signal_design(const ConverterParams& params,
                             double operating_duty) {
  params.validate();
  if (conduction_mode(operating_duty, params) == ConductionMode::Discontinuous) {
    throw std::domain_error(
        "small-signal design requires a continuous-conduction operating point");
  }
  const double u = 1.0 - operating_duty;
  PIDesign d;
  d.rhp_zero = u * u * params.load_resistance / params.inductance;
  d.resonance = u / std::sqrt(params.inductance * params.capacitance);
  d.crossover = d.rhp_zero / 10.0;
  const double wi = d.crossover / 10.0;

  d.plant_gain = control_to_output_gain(params, operating_duty, d.crossover);
  // Unity loop gain at crossover: |C(jw_c)| |G(jw_c)| = 1 with
  // |C(jw)| = k_p sqrt(1 + (w_i/w)^2).
  d.gains.k_p = 1.0 / (d.plant_gain * std::sqrt(1.0 + (wi / d.crossover) *
                                                          (wi / d.crossover)));
  d.gains.k_i = d.gains.k_p * wi;

  const double v_op = steady_state(operating_duty, params).output_voltage;
  d.gains.feedforward_duty =
      std::clamp(1.0 - params.source_voltage / v_op, d.gains.duty_min,
                 d.gains.duty_max);
  d.gains.validate();
  return d;
}

PIOutput pi_step(const PIState& state, const PIGains& gains, double error_v,
                 double dt) {
  gains.validate();
  if (!(dt > 0.0) || !std::isfinite(error_v) || !std::isfinite(state.integrator)) {
    throw std::invalid_argument("pi_step needs dt > 0 and finite inputs");
  }
  const double pre = gains.feedforward_duty + gains.k_p * error_v +
                     gains.k_i * state.integrator;
  const bool high = pre > gains.duty_max;
  const bool low = pre < gains.duty_min;
  const bool advance = (!high && !low) || (high && error_v < 0.0) ||
                       (low && error_v > 0.0);
  PIOutput out;
  out.state = state;
  if (advance) out.state.integrator += error_v * dt;
  out.duty = std::clamp(gains.feedforward_duty + gains.k_p * error_v +
                            gains.k_i * out.state.integrator,
                        gains.duty_min, gains.duty_max);
  return out;
}

double duty_for_voltage(double v_ref, const ConverterParams& params) {
  params.validate();
  auto averaged_v = [&](double duty) {
    const double u = 1.0 - duty;
    return params.source_voltage * u * params.load_resistance /
           (u * u * params.load_resistance + params.inductor_resistance);
  };
  // The averaged curve rises from the pass-through value to its peak at
  // u = sqrt(R_L/R); only that branch is usable.
  const double u_peak =
      params.inductor_resistance > 0.0
          ? std::sqrt(params.inductor_resistance / params.load_resistance)
          : 0.0;
  const double d_peak = std::min(1.0 - u_peak, 1.0 - 1e-6);
  if (!(v_ref >= averaged_v(0.0) && v_ref <= averaged_v(d_peak))) {
    throw std::domain_error("requested voltage unreachable at this operating point");
  }
  double lo = 0.0, hi = d_peak;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (averaged_v(mid) < v_ref ? lo : hi) = mid;
  }
  const double duty = 0.5 * (lo + hi);
  if (conduction_mode(duty, params) == ConductionMode::Discontinuous) {
    throw std::domain_error("equilibrium duty lands in discontinuous conduction");
  }
  return duty;
}

}  // namespace bcsim
