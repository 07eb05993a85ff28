#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bcsim {

enum class Activation { Identity, Tanh, Logistic };

// Small dense feedforward network. Plain value type: copying snapshots a
// network, training mutates only the copy it is handed.
struct Network {
  std::vector<int> layer_sizes;          // input, hidden..., output widths
  std::vector<Eigen::MatrixXd> weights;  // weights[l] is sizes[l+1] x sizes[l]
  std::vector<Eigen::VectorXd> biases;
  Activation hidden_activation = Activation::Tanh;
  Activation output_activation = Activation::Identity;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  // Throws std::invalid_argument on shape mismatch or non-finite parameters.
  void validate() const;
};

// Seeded uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases.
Network make_network(const std::vector<int>& layer_sizes, std::uint64_t seed,
                     Activation hidden = Activation::Tanh,
                     Activation output = Activation::Identity);

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& input);

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  double norm() const;
  bool finite() const;
};

Gradients zero_gradients(const Network& net);

// Gradient of (output . cotangent) with respect to every weight and bias.
Gradients grad_params(const Network& net, const Eigen::VectorXd& input,
                      const Eigen::VectorXd& output_cotangent);

// Exact Jacobian of the network output with respect to its input,
// output_size x input_size.
Eigen::MatrixXd input_jacobian(const Network& net, const Eigen::VectorXd& input);

struct TrainingConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double max_gradient_norm = 1.0;
  int epochs = 40;
  int batch_size = 32;
  std::uint64_t rng_seed = 0;
  void validate() const;
};

// Gradient descent with momentum and global-norm clipping. Owns the velocity
// state so repeated steps against the same network form one trajectory.
class Optimizer {
 public:
  Optimizer(const Network& net, const TrainingConfig& config);

  // Clips the gradient to max_gradient_norm, folds it into the velocity and
  // descends. Non-finite gradients are not applied; they are counted and the
  // call returns false.
  bool step(Network& net, const Gradients& g);

  int skipped_steps() const { return skipped_; }
  const TrainingConfig& config() const { return config_; }

  // Rescales the step size mid-run; the accumulated velocity is kept, so
  // annealed schedules can be layered on top of a fixed config.
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  TrainingConfig config_;
  Gradients velocity_;
  int skipped_ = 0;
};

// Stream format: magic tag, format version, layer sizes, then parameters as
// little-endian doubles in layer order, weights row-major then biases.
// Activations are not part of the stream; each consumer fixes them by role.
std::vector<std::uint8_t> serialize(const Network& net);
Network deserialize(const std::vector<std::uint8_t>& bytes);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace bcsim
