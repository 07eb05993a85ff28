#pragma once

// Finite-difference oracles for the network derivatives, shared by the unit
// tests and the acceptance suite. Central differences with h = 1e-6;
// agreement means relative error <= 1e-5, with elements below 1e-8 in
// magnitude compared absolutely.

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include "bcsim/nnet.hpp"

namespace bcsim::fd {

inline bool close(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  const double mag = std::max(std::abs(analytic), std::abs(numeric));
  return diff <= 1e-5 * mag || diff <= 1e-8;
}

// Largest violation across all parameters of d(cot . f)/dtheta. Returns the
// count of elements failing the tolerance.
inline int check_grad_params(const Network& net, const Eigen::VectorXd& input,
                             const Eigen::VectorXd& cot) {
  const double h = 1e-6;
  const Gradients g = grad_params(net, input, cot);
  int bad = 0;
  Network probe = net;
  auto scalar = [&]() { return cot.dot(forward(probe, input)); };
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < net.weights[l].cols(); ++c) {
        const double saved = probe.weights[l](r, c);
        probe.weights[l](r, c) = saved + h;
        const double up = scalar();
        probe.weights[l](r, c) = saved - h;
        const double dn = scalar();
        probe.weights[l](r, c) = saved;
        if (!close(g.weights[l](r, c), (up - dn) / (2 * h))) ++bad;
      }
    }
    for (Eigen::Index r = 0; r < net.biases[l].size(); ++r) {
      const double saved = probe.biases[l](r);
      probe.biases[l](r) = saved + h;
      const double up = scalar();
      probe.biases[l](r) = saved - h;
      const double dn = scalar();
      probe.biases[l](r) = saved;
      if (!close(g.biases[l](r), (up - dn) / (2 * h))) ++bad;
    }
  }
  return bad;
}

inline int check_input_jacobian(const Network& net, const Eigen::VectorXd& input) {
  const double h = 1e-6;
  const Eigen::MatrixXd j = input_jacobian(net, input);
  int bad = 0;
  Eigen::VectorXd probe = input;
  for (Eigen::Index c = 0; c < input.size(); ++c) {
    probe(c) = input(c) + h;
    const Eigen::VectorXd up = forward(net, probe);
    probe(c) = input(c) - h;
    const Eigen::VectorXd dn = forward(net, probe);
    probe(c) = input(c);
    for (Eigen::Index r = 0; r < j.rows(); ++r) {
      if (!close(j(r, c), (up(r) - dn(r)) / (2 * h))) ++bad;
    }
  }
  return bad;
}

}  // namespace bcsim::fd
