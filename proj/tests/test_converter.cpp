#include "bcsim/converter.hpp"

#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "bcsim/rng.hpp"

using namespace bcsim;

namespace {

ConverterParams nominal() { return ConverterParams{}; }

// Continuous-conduction duty that places the averaged output at 200 V with
// the 0.5 ohm series loss: root of 160 u^2 - 48 u + 1 = 0, u = 1 - duty.
double duty_for_200v() {
  const double u = (48.0 + std::sqrt(48.0 * 48.0 - 4.0 * 160.0)) / 320.0;
  return 1.0 - u;
}

double energy_residual(const PeriodEnergy& e) {
  const double rhs = e.inductor_delta + e.capacitor_delta + e.load_dissipated +
                     e.series_dissipated;
  const double scale =
      std::max({std::abs(e.source_in), std::abs(e.load_dissipated),
                std::abs(e.capacitor_delta), std::abs(e.inductor_delta), 1e-12});
  return std::abs(e.source_in - rhs) / scale;
}

}  // namespace

TEST_CASE("derivative matches the circuit equations in each mode") {
  const ConverterParams p = nominal();

  const StateRate on = derivative({0.0, 0.0}, SwitchMode::SwitchOn, p);
  CHECK(on.di_dt == Catch::Approx(60.0 / 860e-6).epsilon(1e-12));
  CHECK(on.dv_dt == 0.0);

  const StateRate off =
      derivative({9.01, 200.0}, SwitchMode::SwitchOffConducting, p);
  CHECK(off.di_dt ==
        Catch::Approx((60.0 - 0.5 * 9.01 - 200.0) / 860e-6).epsilon(1e-12));
  CHECK(off.dv_dt ==
        Catch::Approx(9.01 / 860e-6 - 200.0 / (80.0 * 860e-6)).epsilon(1e-12));
  CHECK(off.di_dt == Catch::Approx(-168029.07).epsilon(1e-6));
  CHECK(off.dv_dt == Catch::Approx(7569.77).epsilon(1e-6));

  // Idle holds the current at zero regardless of the state handed in.
  const StateRate idle = derivative({3.0, 120.0}, SwitchMode::SwitchOffIdle, p);
  CHECK(idle.di_dt == 0.0);
  CHECK(idle.dv_dt == Catch::Approx(-120.0 / (80.0 * 860e-6)).epsilon(1e-12));
}

TEST_CASE("pure RC decay is reproduced to closed form") {
  ConverterParams p = nominal();
  p.source_voltage = 0.0;
  const double rc = p.load_resistance * p.capacitance;

  ConverterState x{0.0, 200.0};
  const ConverterState one = step_period(x, 0.0, p);
  CHECK(one.inductor_current == 0.0);
  CHECK(one.output_voltage ==
        Catch::Approx(200.0 * std::exp(-p.control_period / rc)).epsilon(1e-12));

  // 10 ms of accumulated periods against the closed form.
  for (int k = 0; k < 200; ++k) x = step_period(x, 0.0, p);
  const double expect = 200.0 * std::exp(-200.0 * p.control_period / rc);
  CHECK(std::abs(x.output_voltage - expect) / expect <= 1e-9);
}

TEST_CASE("full-on period charges the inductor along the exact exponential") {
  const ConverterParams p = nominal();
  const ConverterState x = step_period({0.0, 0.0}, 1.0, p);
  const double ieq = p.source_voltage / p.inductor_resistance;
  const double expect =
      ieq * (1.0 - std::exp(-p.inductor_resistance * p.control_period /
                            p.inductance));
  CHECK(x.inductor_current == Catch::Approx(expect).epsilon(1e-12));
  CHECK(x.output_voltage == 0.0);
}

TEST_CASE("off-interval propagation agrees with a dense RK4 cross-check") {
  const ConverterParams p = nominal();
  // State far from any zero crossing so the whole off-interval is one
  // conducting segment.
  const ConverterState x0{9.0, 195.0};
  const ConverterState end = step_period(x0, 0.0, p);

  // Fixed-step RK4 on di/dt = (v_s - R_L i - v)/L, dv/dt = i/C - v/(RC).
  auto f = [&](double i, double v, double* di, double* dv) {
    *di = (p.source_voltage - p.inductor_resistance * i - v) / p.inductance;
    *dv = i / p.capacitance - v / (p.load_resistance * p.capacitance);
  };
  double i = x0.inductor_current, v = x0.output_voltage;
  const int n = 20000;
  const double h = p.control_period / n;
  for (int k = 0; k < n; ++k) {
    double k1i, k1v, k2i, k2v, k3i, k3v, k4i, k4v;
    f(i, v, &k1i, &k1v);
    f(i + 0.5 * h * k1i, v + 0.5 * h * k1v, &k2i, &k2v);
    f(i + 0.5 * h * k2i, v + 0.5 * h * k2v, &k3i, &k3v);
    f(i + h * k3i, v + h * k3v, &k4i, &k4v);
    i += h / 6.0 * (k1i + 2 * k2i + 2 * k3i + k4i);
    v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
  }
  CHECK(end.inductor_current == Catch::Approx(i).epsilon(1e-10));
  CHECK(end.output_voltage == Catch::Approx(v).epsilon(1e-10));
}

TEST_CASE("energy balance holds to quadrature precision") {
  ConverterParams p = nominal();

  SECTION("lossless converter") {
    p.inductor_resistance = 0.0;
    Rng rng(7);
    ConverterState x{2.0, 90.0};
    for (int k = 0; k < 50; ++k) {
      const double duty = rng.uniform(0.0, 1.0);
      const PeriodTally t = step_period_detailed(x, duty, p);
      CHECK(energy_residual(t.energy) <= 1e-6);
      CHECK(t.energy.series_dissipated == 0.0);
      x = t.end_state;
    }
  }

  SECTION("with series loss and DCM intervals") {
    p.load_resistance = 2000.0;
    ConverterState x{0.0, 0.0};
    Rng rng(11);
    for (int k = 0; k < 50; ++k) {
      const double duty = rng.uniform(0.05, 0.95);
      const PeriodTally t = step_period_detailed(x, duty, p);
      CHECK(energy_residual(t.energy) <= 1e-6);
      x = t.end_state;
    }
  }
}

TEST_CASE("inductor current never goes negative") {
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    ConverterParams p = nominal();
    p.load_resistance = rng.uniform(50.0, 2000.0);
    p.source_voltage = rng.uniform(0.0, 66.0);
    ConverterState x{rng.uniform(0.0, 25.0), rng.uniform(0.0, 260.0)};
    const double duty = rng.uniform(0.0, 1.0);
    const PeriodTally t = step_period_detailed(x, duty, p);
    REQUIRE(t.end_state.inductor_current >= 0.0);
    REQUIRE(t.min_inductor_current >= 0.0);
  }
}

TEST_CASE("DCM entry pins the current at exactly zero") {
  ConverterParams p = nominal();
  p.load_resistance = 2000.0;
  ConverterState x{0.0, 0.0};
  for (int k = 0; k < 2000; ++k) x = step_period(x, 0.5, p);
  const PeriodTally t = step_period_detailed(x, 0.5, p);
  CHECK(t.idled);
  CHECK(t.min_inductor_current == 0.0);
  CHECK(t.end_state.inductor_current == 0.0);
}

TEST_CASE("continuous conduction keeps the current strictly positive") {
  const ConverterParams p = nominal();
  ConverterState x{0.0, 0.0};
  const double duty = duty_for_200v();
  for (int k = 0; k < 4000; ++k) x = step_period(x, duty, p);
  const PeriodTally t = step_period_detailed(x, duty, p);
  CHECK_FALSE(t.idled);
  CHECK(t.min_inductor_current > 0.0);
}

TEST_CASE("diode re-opens when the output decays below the source") {
  ConverterParams p = nominal();
  p.load_resistance = 1.0;  // RC = 860 us, decays through v_s within a period
  const ConverterState x0{0.0, 61.0};
  const ConverterState end = step_period(x0, 0.0, p);
  // Idle until v_o = 60 V at t = RC ln(61/60) ~ 14.2 us, conduction after.
  CHECK(end.inductor_current > 0.0);
  const PeriodTally t = step_period_detailed(x0, 0.0, p);
  CHECK(t.idled);
  CHECK(energy_residual(t.energy) <= 1e-6);
}

TEST_CASE("long fixed-duty run converges to the averaged equilibrium") {
  const ConverterParams p = nominal();
  const double duty = duty_for_200v();
  const ConverterState eq = steady_state(duty, p);
  CHECK(eq.output_voltage == Catch::Approx(200.0).epsilon(1e-9));
  CHECK(eq.inductor_current == Catch::Approx(9.0098).epsilon(1e-3));

  ConverterState x{0.0, 0.0};
  for (int k = 0; k < 4000; ++k) x = step_period(x, duty, p);
  const PeriodTally t = step_period_detailed(x, duty, p);
  const double half_ripple = p.source_voltage * duty /
                             (2.0 * p.inductance * p.switching_frequency);
  CHECK(std::abs(t.mean_output_voltage - eq.output_voltage) <=
        0.01 * eq.output_voltage);
  CHECK(std::abs(t.mean_inductor_current - eq.inductor_current) <= half_ripple);
}

TEST_CASE("steady_state covers the pass-through point and rejects DCM") {
  ConverterParams p = nominal();

  const ConverterState passthrough = steady_state(0.0, p);
  CHECK(passthrough.output_voltage ==
        Catch::Approx(60.0 * 80.0 / 80.5).epsilon(1e-12));
  CHECK(passthrough.inductor_current ==
        Catch::Approx(passthrough.output_voltage / 80.0).epsilon(1e-12));

  // Ideal boost at duty 0.7 without series loss: exactly 200 V.
  ConverterParams ideal = p;
  ideal.inductor_resistance = 0.0;
  CHECK(steady_state(0.7, ideal).output_voltage ==
        Catch::Approx(200.0).epsilon(1e-12));

  p.load_resistance = 2000.0;
  CHECK_THROWS_AS(steady_state(duty_for_200v(), p), std::domain_error);
}

TEST_CASE("conduction mode classification") {
  ConverterParams p = nominal();
  CHECK(conduction_mode(duty_for_200v(), p) == ConductionMode::Continuous);

  p.load_resistance = 2000.0;
  CHECK(conduction_mode(duty_for_200v(), p) == ConductionMode::Discontinuous);

  // R = 2 L f / (D (1-D)^2) with no series loss puts the mean exactly at
  // half the ripple.
  ConverterParams b = nominal();
  b.inductor_resistance = 0.0;
  b.load_resistance =
      2.0 * b.inductance * b.switching_frequency / (0.5 * 0.25);
  CHECK(conduction_mode(0.5, b) == ConductionMode::Boundary);
}

TEST_CASE("intra-period samples follow the closed-form decay") {
  ConverterParams p = nominal();
  p.source_voltage = 0.0;
  p.substeps_per_period = 25;
  const double rc = p.load_resistance * p.capacitance;
  std::vector<std::pair<double, ConverterState>> samples;
  step_period_detailed({0.0, 200.0}, 0.0, p, &samples);
  REQUIRE(samples.size() == 25);
  double prev_t = 0.0;
  for (const auto& [t, s] : samples) {
    CHECK(t > prev_t);
    prev_t = t;
    CHECK(s.output_voltage == Catch::Approx(200.0 * std::exp(-t / rc)).epsilon(1e-12));
    CHECK(s.inductor_current == 0.0);
  }
}

TEST_CASE("invalid inputs are rejected") {
  const ConverterParams p = nominal();
  CHECK_THROWS_AS(step_period({0.0, 0.0}, -0.1, p), std::invalid_argument);
  CHECK_THROWS_AS(step_period({0.0, 0.0}, 1.1, p), std::invalid_argument);
  CHECK_THROWS_AS(step_period({-1.0, 0.0}, 0.5, p), std::invalid_argument);
  CHECK_THROWS_AS(step_period({0.0, -1.0}, 0.5, p), std::invalid_argument);
  CHECK_THROWS_AS(
      step_period({std::nan(""), 0.0}, 0.5, p), std::invalid_argument);

  ConverterParams bad = p;
  bad.control_period = 40e-6;
  CHECK_THROWS_AS(step_period({0.0, 0.0}, 0.5, bad), std::invalid_argument);
  bad = p;
  bad.inductance = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
