#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bcsim/converter.hpp"
#include "bcsim/features.hpp"
#include "bcsim/nnet.hpp"
#include "bcsim/scenario.hpp"

namespace bcsim {

struct UtilityWeights {
  double voltage_error = 1.0;  // weight on squared normalized voltage error
  void validate() const;
};

// Per-period cost. Quadratic in the normalized voltage error only; current
// is shaped indirectly through the dynamics.
double utility(const FeatureVector& f, const UtilityWeights& w);

// Gradient with the four features treated as independent coordinates. The
// error slot carries the whole derivative; the voltage slot stays zero even
// though the two are linked through the reference, because that coupling
// lives in the state Jacobian's error row, and counting it here too would
// double it.
Eigen::Vector4d utility_gradient(const FeatureVector& f, const UtilityWeights& w);

// One-step costate recursion for a scalar control:
//   target_j = dU/dx_j + dU/du da/dx_j
//            + gamma (sum_i lam_i dX_i/dx_j + (sum_i lam_i dX_i/du) da/dx_j)
// where lam is the critic estimate at the successor state. Generic over the
// state dimension so the same code drives the converter and the scalar
// validation plant.
Eigen::VectorXd critic_target(const Eigen::VectorXd& du_dx, double du_du,
                              const Eigen::VectorXd& da_dx,
                              const Eigen::MatrixXd& dx_dx,
                              const Eigen::VectorXd& dx_du,
                              const Eigen::VectorXd& lambda_next, double gamma);

// Semi-gradient regression of the critic toward a fixed target. Returns the
// pre-update error norm.
double update_critic(Network& critic, Optimizer& opt, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& target);

// Policy output squashed into (lo, hi) by the network's logistic output
// stage, so saturation is structural rather than clamped and the policy
// gradient exists everywhere.
double act(const Network& action, const Eigen::VectorXd& x, double lo, double hi);
Eigen::VectorXd act_gradient(const Network& action, const Eigen::VectorXd& x,
                             double lo, double hi);

// Descends the policy along dJ/du through the squashing stage. dj_du is
// dU/du + gamma lam . dX/du, assembled by the caller.
void update_action(Network& action, Optimizer& opt, const Eigen::VectorXd& x,
                   double dj_du, double lo, double hi);

// Learning-rate, momentum and clipping knobs come from the two nested
// training configs; the critic's epoch count doubles as the pretraining
// sweep count.
struct DhpConfig {
  double gamma = 0.95;
  TrainingConfig critic;
  TrainingConfig action;
  double horizon = 1.0;  // [s], training episode length
  double duty_min = 0.05;
  double duty_max = 0.95;
  UtilityWeights utility_weights;
  FeatureScaling scaling;
  void validate() const;
};

struct DhpController {
  Network critic;  // features -> costate estimate
  Network action;  // features -> duty, logistic output
};

// Fresh controller pair. The action output bias is offset so the initial
// policy commands roughly the nominal boost duty instead of 50%.
DhpController make_dhp_controller(const DhpConfig& config, std::uint64_t seed);

// Mean costate residual norm over a transition set: the average of
// |critic(x) - target(x)| with targets built from the supplied Jacobian
// provider and the current action network's policy gradient.
double critic_residual(const Network& critic, const Network& action,
                       const std::vector<TransitionSample>& data,
                       const JacobianFn& jac, const ConverterParams& params,
                       const DhpConfig& config);

struct PretrainResult {
  // Residual norm averaged over each sweep's pre-update samples.
  std::vector<double> sweep_residuals;
};

// Offline critic phase: sweeps recorded transitions config.critic.epochs
// times, regressing on targets from the frozen action network and the
// Jacobian provider. Throws std::runtime_error if a sweep's average
// residual grows past ten times the first sweep's, which catches a bad
// learning rate early.
PretrainResult pretrain_critic(Network& critic, const Network& action,
                               const std::vector<TransitionSample>& data,
                               const JacobianFn& jac,
                               const ConverterParams& params,
                               const DhpConfig& config);

struct EpisodeResult {
  std::vector<TraceRow> trace;
  double mean_utility = 0.0;
  int critic_skipped = 0;  // optimizer steps dropped on non-finite gradients
  int action_skipped = 0;
  int extrapolated_periods = 0;  // periods outside the provider's trust region
  bool diverged = false;  // plant state left the finite range, episode cut
};

// One scenario rollout under the action network. With learn set, critic and
// action are updated every control period from the same pre-update
// successor costate; without it the networks are read-only and the trace
// just records the policy. Periods whose Jacobian query is flagged as
// extrapolation train neither network: outside the identified envelope the
// sensitivities are unfounded and one inrush transient of bad pushes can
// wreck the policy for good.
EpisodeResult run_dhp_episode(Network& critic, Network& action,
                              const Scenario& scenario, const JacobianFn& jac,
                              const ConverterParams& base_params,
                              const DhpConfig& config, bool learn);

// Training curriculum: the benchmark scenarios repeated in order, each
// stretched to the training horizon so the policy also sees long settled
// stretches, not just transients.
std::vector<Scenario> make_training_scenarios(int cycles, double horizon);

// A trained controller with everything needed to run it again.
struct ControllerBundle {
  Network model;
  Network critic;
  Network action;
  DhpConfig config;
};

// Directory layout: model.net, critic.net, action.net, bundle.kv.
void save_bundle(const std::string& dir, const ControllerBundle& bundle);
ControllerBundle load_bundle(const std::string& dir);

}  // namespace bcsim
