#pragma once

#include "bcsim/converter.hpp"

namespace bcsim {

struct PIGains {
  double k_p = 0.0;  // duty per volt
  double k_i = 0.0;  // duty per volt-second
  double duty_min = 0.05;
  double duty_max = 0.95;
  double feedforward_duty = 0.0;
  void validate() const;
};

struct PIState {
  double integrator = 0.0;  // [V s]
};

// Loop-shaping landmarks of the control-to-output transfer function at the
// design point, kept for reporting.
struct PIDesign {
  PIGains gains;
  double rhp_zero = 0.0;    // omega_z = (1-D)^2 R / L [rad/s]
  double resonance = 0.0;   // omega_0 = (1-D) / sqrt(LC) [rad/s]
  double crossover = 0.0;   // omega_c = omega_z / 10 [rad/s]
  double plant_gain = 0.0;  // |G_vd(j omega_c)| [V]
};

// Tunes a PI voltage loop on the averaged small-signal model linearized at
// the given duty cycle. The crossover sits a decade below the right-half-
// plane zero and the integrator corner a decade below the crossover, which
// is deliberately conservative; the RHP zero caps what a single voltage loop
// can do. Feedforward is the ideal boost duty for the operating output.
// Rejects discontinuous-conduction operating points.
PIDesign small_signal_design(const ConverterParams& params, double operating_duty);

struct PIOutput {
  double duty = 0.0;
  PIState state;
};

// One control-period PI update: duty = clamp(ff + k_p e + k_i integral).
// The integrator only advances when the pre-clamp output is inside the
// bounds or the error pushes back toward them (conditional anti-windup).
PIOutput pi_step(const PIState& state, const PIGains& gains, double error_v,
                 double dt);

// Duty cycle whose averaged equilibrium output equals v_ref, found by
// bisection on the continuous-conduction branch. Throws std::domain_error
// when v_ref is unreachable.
double duty_for_voltage(double v_ref, const ConverterParams& params);

}  // namespace bcsim
