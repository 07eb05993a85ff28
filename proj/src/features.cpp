#include "bcsim/features.hpp"

namespace bcsim {

FeatureVector make_features(const ConverterState& state, double v_ref,
                            double v_s, const FeatureScaling& scaling) {
  FeatureVector f;
  f.current_n = state.inductor_current / scaling.current_base;
  f.voltage_n = state.output_voltage / scaling.voltage_base;
  f.error_n = (v_ref - state.output_voltage) / scaling.voltage_base;
  f.source_n = v_s / scaling.voltage_base;
  return f;
}

FeatureJacobians assemble_feature_jacobians(
    const Eigen::Matrix<double, 2, 4>& d_pair_dx,
    const Eigen::Vector2d& d_pair_du) {
  FeatureJacobians j;
  j.d_dx.row(0) = d_pair_dx.row(0);
  j.d_dx.row(1) = d_pair_dx.row(1);
  // e' = (v_ref - v_o')/V_base and v_ref/V_base = v_n + e_n, so the error row
  // is [0, 1, 1, 0] minus the voltage row.
  j.d_dx.row(2) = Eigen::RowVector4d(0, 1, 1, 0) - d_pair_dx.row(1);
  j.d_dx.row(3) = Eigen::RowVector4d(0, 0, 0, 1);
  j.d_du(0) = d_pair_du(0);
  j.d_du(1) = d_pair_du(1);
  j.d_du(2) = -d_pair_du(1);
  j.d_du(3) = 0.0;
  return j;
}

}  // namespace bcsim
