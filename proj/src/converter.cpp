#include "bcsim/converter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

namespace bcsim {
namespace {

// Inductor current below this magnitude counts as the diode turning off.
constexpr double kCurrentTol = 1e-9;  // [A]
// Scan resolution used to bracket the first zero crossing of i_L inside an
// off-interval. Segments are 50 us or shorter while the current waveform
// bends on millisecond scales, so one sign change per bracket is guaranteed.
constexpr int kScanNodes = 64;

struct Affine {
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
};

Affine mode_matrices(SwitchMode mode, const ConverterParams& p) {
  const double l = p.inductance;
  const double rc = p.load_resistance * p.capacitance;
  Affine m;
  switch (mode) {
    case SwitchMode::SwitchOn:
      m.a(0, 0) = -p.inductor_resistance / l;
      m.a(1, 1) = -1.0 / rc;
      m.c(0) = p.source_voltage / l;
      break;
    case SwitchMode::SwitchOffConducting:
      m.a(0, 0) = -p.inductor_resistance / l;
      m.a(0, 1) = -1.0 / l;
      m.a(1, 0) = 1.0 / p.capacitance;
      m.a(1, 1) = -1.0 / rc;
      m.c(0) = p.source_voltage / l;
      break;
    case SwitchMode::SwitchOffIdle:
      m.a(1, 1) = -1.0 / rc;
      break;
  }
  return m;
}

Eigen::Matrix3d augmented(const Affine& s) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  m.topLeftCorner<2, 2>() = s.a;
  m.topRightCorner<2, 1>() = s.c;
  return m;
}

// Exact advance within one mode. The on and idle modes decouple, so they use
// closed forms; the off-conducting mode uses the matrix exponential of the
// affine system lifted to homogeneous coordinates.
ConverterState advance(const ConverterState& x, SwitchMode mode, double dt,
                       const ConverterParams& p) {
  if (dt == 0.0) return x;
  const double rc = p.load_resistance * p.capacitance;
  switch (mode) {
    case SwitchMode::SwitchOn: {
      ConverterState out;
      const double rl = p.inductor_resistance;
      if (rl > 0.0) {
        const double ieq = p.source_voltage / rl;
        out.inductor_current =
            ieq + (x.inductor_current - ieq) * std::exp(-rl * dt / p.inductance);
      } else {
        out.inductor_current =
            x.inductor_current + p.source_voltage * dt / p.inductance;
      }
      out.output_voltage = x.output_voltage * std::exp(-dt / rc);
      return out;
    }
    case SwitchMode::SwitchOffIdle: {
      ConverterState out;
      out.inductor_current = 0.0;
      out.output_voltage = x.output_voltage * std::exp(-dt / rc);
      return out;
    }
    case SwitchMode::SwitchOffConducting: {
      const Eigen::Matrix3d phi =
          (augmented(mode_matrices(mode, p)) * dt).exp();
      const Eigen::Vector3d z =
          phi * Eigen::Vector3d(x.inductor_current, x.output_voltage, 1.0);
      return ConverterState{z(0), z(1)};
    }
  }
  throw std::logic_error("unreachable switch mode");
}

// First time in (0, dt_max] at which i_L reaches zero from above under the
// off-conducting dynamics, or -1 when the current stays positive. The state
// at the crossing is written to *at_crossing with the current projected to
// exactly zero.
double find_crossing(const ConverterState& x, double dt_max,
                     const ConverterParams& p, ConverterState* at_crossing) {
  const Eigen::Matrix3d m =
      augmented(mode_matrices(SwitchMode::SwitchOffConducting, p));
  const Eigen::Vector3d z0(x.inductor_current, x.output_voltage, 1.0);

  const double h = dt_max / kScanNodes;
  const Eigen::Matrix3d phi = (m * h).exp();
  Eigen::Vector3d z = z0;
  double lo = 0.0;
  double hi = -1.0;
  for (int k = 1; k <= kScanNodes; ++k) {
    const Eigen::Vector3d znext = phi * z;
    if (znext(0) <= 0.0) {
      hi = k * h;
      break;
    }
    z = znext;
    lo = k * h;
  }
  if (hi < 0.0) return -1.0;

  auto eval = [&](double t) -> Eigen::Vector3d { return (m * t).exp() * z0; };
  double t = hi;
  Eigen::Vector3d zc = eval(t);
  for (int iter = 0; iter < 200; ++iter) {
    if (std::abs(zc(0)) <= kCurrentTol || hi - lo < 1e-18) break;
    const double mid = 0.5 * (lo + hi);
    const Eigen::Vector3d zm = eval(mid);
    if (zm(0) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    t = mid;
    zc = zm;
  }
  at_crossing->inductor_current = 0.0;
  at_crossing->output_voltage = zc(1);
  return t;
}

struct Segment {
  SwitchMode mode;
  double start;   // offset from period start [s]
  double length;  // [s]
  ConverterState begin;
};

// Splits one switching period into exact affine segments and returns the end
// state. Segment count is small: on-interval, then off-interval pieces
// produced by diode turn-off (i_L hits zero) and turn-on (v_o decays to v_s).
ConverterState split_period(const ConverterState& x0, double duty,
                            const ConverterParams& p,
                            std::vector<Segment>& segments) {
  segments.clear();
  const double ts = p.control_period;
  const double t_on = duty * ts;
  ConverterState x = x0;
  double cursor = 0.0;

  if (t_on > 0.0) {
    segments.push_back({SwitchMode::SwitchOn, cursor, t_on, x});
    x = advance(x, SwitchMode::SwitchOn, t_on, p);
    cursor += t_on;
  }

  double remaining = ts - t_on;
  int guard = 0;
  while (remaining > 0.0) {
    if (++guard > 16) throw std::runtime_error("switch mode chatter within one period");
    // Diode conducts while current flows or while the source is forward
    // biased against the output.
    const bool conducting =
        x.inductor_current > 0.0 || x.output_voltage <= p.source_voltage;
    if (conducting) {
      ConverterState at_cross;
      const double tc = x.inductor_current > 0.0
                            ? find_crossing(x, remaining, p, &at_cross)
                            : -1.0;
      if (tc < 0.0) {
        segments.push_back({SwitchMode::SwitchOffConducting, cursor, remaining, x});
        x = advance(x, SwitchMode::SwitchOffConducting, remaining, p);
        break;
      }
      segments.push_back({SwitchMode::SwitchOffConducting, cursor, tc, x});
      x = at_cross;
      cursor += tc;
      remaining -= tc;
    } else {
      // Idle: i_L pinned at zero. The diode re-opens if v_o decays to v_s.
      double t_reopen = -1.0;
      if (p.source_voltage > 0.0 && x.output_voltage > p.source_voltage) {
        const double tau = p.load_resistance * p.capacitance *
                           std::log(x.output_voltage / p.source_voltage);
        if (tau < remaining) t_reopen = tau;
      }
      if (t_reopen < 0.0) {
        segments.push_back({SwitchMode::SwitchOffIdle, cursor, remaining, x});
        x = advance(x, SwitchMode::SwitchOffIdle, remaining, p);
        break;
      }
      segments.push_back({SwitchMode::SwitchOffIdle, cursor, t_reopen, x});
      x = ConverterState{0.0, p.source_voltage};
      cursor += t_reopen;
      remaining -= t_reopen;
    }
  }
  return x;
}

void check_step_inputs(const ConverterState& state, double duty,
                       const ConverterParams& params) {
  params.validate();
  if (!(duty >= 0.0 && duty <= 1.0)) {
    throw std::invalid_argument("duty must lie in [0, 1], got " +
                                std::to_string(duty));
  }
  if (!std::isfinite(state.inductor_current) ||
      !std::isfinite(state.output_voltage) || state.inductor_current < 0.0 ||
      state.output_voltage < 0.0) {
    throw std::invalid_argument("converter state must be finite and non-negative");
  }
}

// Moment vector y = [i, v, i^2, iv, v^2, Int i, Int v, Int i^2, Int v^2, 1]
// evolves linearly under any affine segment; its exponential yields exact
// quadratures for the energy tallies.
using Moment = Eigen::Matrix<double, 10, 1>;
using MomentMatrix = Eigen::Matrix<double, 10, 10>;

MomentMatrix moment_matrix(const Affine& s) {
  const double a11 = s.a(0, 0), a12 = s.a(0, 1);
  const double a21 = s.a(1, 0), a22 = s.a(1, 1);
  const double c1 = s.c(0), c2 = s.c(1);
  MomentMatrix m = MomentMatrix::Zero();
  m(0, 0) = a11; m(0, 1) = a12; m(0, 9) = c1;
  m(1, 0) = a21; m(1, 1) = a22; m(1, 9) = c2;
  m(2, 2) = 2 * a11; m(2, 3) = 2 * a12; m(2, 0) = 2 * c1;
  m(3, 2) = a21; m(3, 3) = a11 + a22; m(3, 4) = a12; m(3, 0) = c2; m(3, 1) = c1;
  m(4, 3) = 2 * a21; m(4, 4) = 2 * a22; m(4, 1) = 2 * c2;
  m(5, 0) = 1.0;
  m(6, 1) = 1.0;
  m(7, 2) = 1.0;
  m(8, 4) = 1.0;
  return m;
}

}  // namespace

void ConverterParams::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  auto non_negative = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!positive(inductance) || !positive(capacitance) ||
      !positive(load_resistance) || !positive(switching_frequency) ||
      !positive(control_period)) {
    throw std::invalid_argument("converter parameters must be positive and finite");
  }
  if (!non_negative(inductor_resistance) || !non_negative(source_voltage)) {
    throw std::invalid_argument(
        "inductor resistance and source voltage must be non-negative");
  }
  if (std::abs(control_period * switching_frequency - 1.0) > 1e-9) {
    throw std::invalid_argument(
        "control_period must equal 1/switching_frequency");
  }
  if (substeps_per_period < 1) {
    throw std::invalid_argument("substeps_per_period must be at least 1");
  }
}

StateRate derivative(const ConverterState& state, SwitchMode mode,
                     const ConverterParams& params) {
  params.validate();
  const Affine m = mode_matrices(mode, params);
  const Eigen::Vector2d x(state.inductor_current, state.output_voltage);
  const Eigen::Vector2d r = m.a * x + m.c;
  return StateRate{r(0), r(1)};
}

ConverterState step_period(const ConverterState& state, double duty,
                           const ConverterParams& params) {
  check_step_inputs(state, duty, params);
  std::vector<Segment> segments;
  return split_period(state, duty, params, segments);
}

PeriodTally step_period_detailed(
    const ConverterState& state, double duty, const ConverterParams& params,
    std::vector<std::pair<double, ConverterState>>* samples) {
  check_step_inputs(state, duty, params);
  std::vector<Segment> segments;
  PeriodTally tally;
  tally.end_state = split_period(state, duty, params, segments);

  double int_i = 0.0, int_v = 0.0, int_i2 = 0.0, int_v2 = 0.0;
  double min_i = std::min(state.inductor_current, tally.end_state.inductor_current);
  for (const Segment& seg : segments) {
    if (seg.length <= 0.0) continue;
    if (seg.mode == SwitchMode::SwitchOffIdle) tally.idled = true;
    min_i = std::min(min_i, seg.begin.inductor_current);
    Moment y = Moment::Zero();
    y(0) = seg.begin.inductor_current;
    y(1) = seg.begin.output_voltage;
    y(2) = y(0) * y(0);
    y(3) = y(0) * y(1);
    y(4) = y(1) * y(1);
    y(9) = 1.0;
    const MomentMatrix phi =
        (moment_matrix(mode_matrices(seg.mode, params)) * seg.length).exp();
    const Moment ye = phi * y;
    int_i += ye(5);
    int_v += ye(6);
    int_i2 += ye(7);
    int_v2 += ye(8);
  }

  const double ts = params.control_period;
  tally.mean_inductor_current = int_i / ts;
  tally.mean_output_voltage = int_v / ts;
  tally.energy.source_in = params.source_voltage * int_i;
  tally.energy.load_dissipated = int_v2 / params.load_resistance;
  tally.energy.series_dissipated = params.inductor_resistance * int_i2;
  const auto sq = [](double v) { return v * v; };
  tally.energy.inductor_delta =
      0.5 * params.inductance *
      (sq(tally.end_state.inductor_current) - sq(state.inductor_current));
  tally.energy.capacitor_delta =
      0.5 * params.capacitance *
      (sq(tally.end_state.output_voltage) - sq(state.output_voltage));

  // Intra-period samples; also used to tighten the period current minimum.
  const int n = params.substeps_per_period;
  auto state_at = [&](double t) -> ConverterState {
    const Segment* seg = &segments.back();
    for (const Segment& s : segments) {
      if (t <= s.start + s.length) {
        seg = &s;
        break;
      }
    }
    return advance(seg->begin, seg->mode, std::max(0.0, t - seg->start), params);
  };
  for (int j = 1; j <= n; ++j) {
    const double t = ts * j / n;
    const ConverterState s = state_at(std::min(t, ts));
    min_i = std::min(min_i, s.inductor_current);
    if (samples) samples->emplace_back(t, s);
  }
  if (tally.idled) min_i = 0.0;
  tally.min_inductor_current = min_i;
  return tally;
}

ConductionMode conduction_mode(double duty, const ConverterParams& params) {
  params.validate();
  if (!(duty >= 0.0 && duty < 1.0)) {
    throw std::invalid_argument("conduction_mode requires duty in [0, 1)");
  }
  // Averaged inductor current v_o/(R(1-D)) with v_o eliminated.
  const double u = 1.0 - duty;
  const double mean = params.source_voltage /
                      (u * u * params.load_resistance + params.inductor_resistance);
  const double half_ripple = params.source_voltage * duty /
                             (2.0 * params.inductance * params.switching_frequency);
  const double tol = 1e-12 * std::max({mean, half_ripple, 1e-300});
  if (mean - half_ripple > tol) return ConductionMode::Continuous;
  if (half_ripple - mean > tol) return ConductionMode::Discontinuous;
  return ConductionMode::Boundary;
}

ConverterState steady_state(double duty, const ConverterParams& params) {
  params.validate();
  if (!(duty >= 0.0 && duty < 1.0)) {
    throw std::invalid_argument("steady_state requires duty in [0, 1)");
  }
  if (duty > 0.0 &&
      conduction_mode(duty, params) == ConductionMode::Discontinuous) {
    throw std::domain_error(
        "averaged equilibrium is only valid in continuous conduction");
  }
  const double u = 1.0 - duty;
  ConverterState s;
  s.output_voltage = params.source_voltage * u * params.load_resistance /
                     (u * u * params.load_resistance + params.inductor_resistance);
  s.inductor_current = s.output_voltage / (params.load_resistance * u);
  return s;
}

}  // namespace bcsim
