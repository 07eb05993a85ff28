#pragma once

#include <functional>

#include <Eigen/Dense>

#include "bcsim/converter.hpp"

namespace bcsim {

// Normalization bases shared by every network input.
struct FeatureScaling {
  double current_base = 10.0;    // I_base [A]
  double voltage_base = 200.0;   // V_base [V]
};

// Controller-facing state, all dimensionless. The voltage error is carried
// redundantly next to the output voltage on purpose; the pair encodes the
// reference without feeding it in raw volts.
struct FeatureVector {
  double current_n = 0.0;  // i_L / I_base
  double voltage_n = 0.0;  // v_o / V_base
  double error_n = 0.0;    // (v_ref - v_o) / V_base
  double source_n = 0.0;   // v_s / V_base

  static constexpr int kSize = 4;

  Eigen::Vector4d as_vector() const {
    return Eigen::Vector4d(current_n, voltage_n, error_n, source_n);
  }
  static FeatureVector from_vector(const Eigen::Vector4d& v) {
    return FeatureVector{v(0), v(1), v(2), v(3)};
  }
};

FeatureVector make_features(const ConverterState& state, double v_ref,
                            double v_s, const FeatureScaling& scaling);

// One control-period transition, the training record for the model network.
// The operating conditions in effect during the period ride along so that
// consumers with a physics model can form exact sensitivities per sample;
// purely data-driven consumers ignore them.
struct TransitionSample {
  FeatureVector now;
  double duty = 0.0;
  FeatureVector next;
  double load_resistance = 80.0;  // [ohm]
  double source_voltage = 60.0;   // [V]
};

// One-period sensitivities in feature space. d_dx(i, j) is the derivative of
// next-feature i with respect to current-feature j; d_du is the derivative
// with respect to the duty command.
struct FeatureJacobians {
  Eigen::Matrix4d d_dx = Eigen::Matrix4d::Zero();
  Eigen::Vector4d d_du = Eigen::Vector4d::Zero();
  bool extrapolated = false;  // query fell outside the training box
};

// Jacobian provider queried once per control period. The params argument
// carries the load and source in effect at that period so a physics-based
// provider stays exact under scheduled steps; learned providers ignore it.
using JacobianFn = std::function<FeatureJacobians(
    const FeatureVector&, double, const ConverterParams&)>;

// Lifts the physical-pair sensitivities (rows: i', v'; columns: the four
// features then duty) to the full feature map. The reference is constant
// across one period and the source is exogenous, which fixes the error and
// source rows exactly.
FeatureJacobians assemble_feature_jacobians(
    const Eigen::Matrix<double, 2, 4>& d_pair_dx,
    const Eigen::Vector2d& d_pair_du);

}  // namespace bcsim
