#pragma once

#include <utility>
#include <vector>

namespace bcsim {

// Switching-level model of a DC-DC boost converter. State is the inductor
// current and the output (capacitor) voltage; within each switching period
// the circuit is a sequence of affine segments that are integrated exactly,
// so there is no step-size error anywhere in the simulator.

struct ConverterParams {
  double inductance = 860e-6;         // L [H]
  double capacitance = 860e-6;        // C [F]
  double load_resistance = 80.0;      // R [ohm]
  double inductor_resistance = 0.5;   // R_L [ohm]
  double source_voltage = 60.0;       // v_s [V]
  double switching_frequency = 20e3;  // f_sw [Hz]
  double control_period = 50e-6;      // T_s [s], must equal 1/f_sw
  int substeps_per_period = 100;      // trace sampling resolution only

  // Throws std::invalid_argument on non-positive elements or when
  // control_period disagrees with 1/switching_frequency.
  void validate() const;
};

struct ConverterState {
  double inductor_current = 0.0;  // i_L [A], >= 0 (diode blocks reverse flow)
  double output_voltage = 0.0;    // v_o [V], >= 0
};

enum class SwitchMode {
  SwitchOn,             // switch closed: inductor charges, load on capacitor
  SwitchOffConducting,  // switch open, diode conducting
  SwitchOffIdle         // switch open, i_L pinned at zero (DCM interval)
};

struct StateRate {
  double di_dt;  // [A/s]
  double dv_dt;  // [V/s]
};

StateRate derivative(const ConverterState& state, SwitchMode mode,
                     const ConverterParams& params);

// Energy bookkeeping over one switching period, all in joules. The integrals
// come from the same exact affine propagation as the state, so the balance
//   source_in == inductor_delta + capacitor_delta + load_dissipated + series_dissipated
// holds to numerical precision.
struct PeriodEnergy {
  double source_in = 0.0;          // integral of v_s * i_L
  double load_dissipated = 0.0;    // integral of v_o^2 / R
  double series_dissipated = 0.0;  // integral of R_L * i_L^2
  double inductor_delta = 0.0;     // 1/2 L (i_end^2 - i_start^2)
  double capacitor_delta = 0.0;    // 1/2 C (v_end^2 - v_start^2)
};

struct PeriodTally {
  ConverterState end_state;
  double min_inductor_current = 0.0;  // over the whole period
  double mean_inductor_current = 0.0;
  double mean_output_voltage = 0.0;
  bool idled = false;  // true when a DCM idle interval occurred
  PeriodEnergy energy;
};

// Advances one full switching period: on-interval of duty * T_s followed by
// the off-interval, with exact detection of the inductor-current zero
// crossing (DCM entry) and of diode turn-on when the output decays below the
// source. Requires duty in [0, 1] and a finite, non-negative state.
ConverterState step_period(const ConverterState& state, double duty,
                           const ConverterParams& params);

// Same advance plus energy tallies and optional intra-period samples at
// substeps_per_period resolution; samples carry the time offset from the
// period start.
PeriodTally step_period_detailed(
    const ConverterState& state, double duty, const ConverterParams& params,
    std::vector<std::pair<double, ConverterState>>* samples = nullptr);

// Averaged CCM equilibrium for a fixed duty cycle. Throws std::domain_error
// when the operating point is discontinuous-conduction (the formulas assume
// the diode conducts for the whole off-interval).
ConverterState steady_state(double duty, const ConverterParams& params);

enum class ConductionMode { Continuous, Discontinuous, Boundary };

// Ripple test at the averaged equilibrium: continuous conduction iff the
// mean inductor current exceeds half the peak-to-peak ripple
// v_s * duty / (L * f_sw).
ConductionMode conduction_mode(double duty, const ConverterParams& params);

}  // namespace bcsim
