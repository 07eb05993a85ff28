#include "bcsim/nnet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "bcsim/rng.hpp"

namespace bcsim {
namespace {

constexpr char kMagic[4] = {'b', 'c', 'n', 'n'};
constexpr std::uint32_t kFormatVersion = 1;

double activate(Activation a, double z) {
  switch (a) {
    case Activation::Identity: return z;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Logistic: return 1.0 / (1.0 + std::exp(-z));
  }
  throw std::logic_error("unreachable activation");
}

// Derivative expressed through the activation value, not the preactivation.
double activate_slope(Activation a, double y) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Logistic: return y * (1.0 - y);
  }
  throw std::logic_error("unreachable activation");
}

// Layer outputs for input x: a[0] = x, a[l+1] = act(W a[l] + b).
std::vector<Eigen::VectorXd> forward_trace(const Network& net,
                                           const Eigen::VectorXd& input) {
  if (input.size() != net.input_size()) {
    throw std::invalid_argument("network input size mismatch");
  }
  const int layers = static_cast<int>(net.weights.size());
  std::vector<Eigen::VectorXd> a(layers + 1);
  a[0] = input;
  for (int l = 0; l < layers; ++l) {
    const Activation act = (l + 1 == layers) ? net.output_activation
                                             : net.hidden_activation;
    Eigen::VectorXd z = net.weights[l] * a[l] + net.biases[l];
    a[l + 1] = z.unaryExpr([act](double v) { return activate(act, v); });
  }
  return a;
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back((v >> (8 * k)) & 0xff);
}

void append_f64(std::vector<std::uint8_t>& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int k = 0; k < 8; ++k) out.push_back((bits >> (8 * k)) & 0xff);
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    require(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= std::uint32_t(bytes_[pos_ + k]) << (8 * k);
    pos_ += 4;
    return v;
  }

  double f64() {
    require(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= std::uint64_t(bytes_[pos_ + k]) << (8 * k);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  void require(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw std::runtime_error("truncated network stream");
    }
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Network::validate() const {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("network needs at least input and output layers");
  }
  const std::size_t layers = layer_sizes.size() - 1;
  if (weights.size() != layers || biases.size() != layers) {
    throw std::invalid_argument("layer count mismatch");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (layer_sizes[l] <= 0 || layer_sizes[l + 1] <= 0 ||
        weights[l].rows() != layer_sizes[l + 1] ||
        weights[l].cols() != layer_sizes[l] ||
        biases[l].size() != layer_sizes[l + 1]) {
      throw std::invalid_argument("weight shapes do not chain with layer_sizes");
    }
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw std::invalid_argument("network parameters must be finite");
    }
  }
}

Network make_network(const std::vector<int>& layer_sizes, std::uint64_t seed,
                     Activation hidden, Activation output) {
  Network net;
  net.layer_sizes = layer_sizes;
  net.hidden_activation = hidden;
  net.output_activation = output;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int in = layer_sizes[l];
    const int out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (in + out));
    Eigen::MatrixXd w(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) w(r, c) = rng.uniform(-bound, bound);
    }
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(out));
  }
  net.validate();
  return net;
}

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& input) {
  return forward_trace(net, input).back();
}

double Gradients::norm() const {
  double sum = 0.0;
  for (const auto& w : weights) sum += w.squaredNorm();
  for (const auto& b : biases) sum += b.squaredNorm();
  return std::sqrt(sum);
}

bool Gradients::finite() const {
  for (const auto& w : weights) {
    if (!w.allFinite()) return false;
  }
  for (const auto& b : biases) {
    if (!b.allFinite()) return false;
  }
  return true;
}

Gradients zero_gradients(const Network& net) {
  Gradients g;
  for (const auto& w : net.weights) g.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : net.biases) g.biases.push_back(Eigen::VectorXd::Zero(b.size()));
  return g;
}

Gradients grad_params(const Network& net, const Eigen::VectorXd& input,
                      const Eigen::VectorXd& output_cotangent) {
  if (output_cotangent.size() != net.output_size()) {
    throw std::invalid_argument("cotangent size mismatch");
  }
  const auto a = forward_trace(net, input);
  const int layers = static_cast<int>(net.weights.size());
  Gradients g = zero_gradients(net);
  Eigen::VectorXd delta = output_cotangent;
  for (int l = layers - 1; l >= 0; --l) {
    const Activation act = (l + 1 == layers) ? net.output_activation
                                             : net.hidden_activation;
    const Eigen::VectorXd slope = a[l + 1].unaryExpr(
        [act](double y) { return activate_slope(act, y); });
    delta = delta.cwiseProduct(slope);
    g.weights[l] = delta * a[l].transpose();
    g.biases[l] = delta;
    if (l > 0) delta = net.weights[l].transpose() * delta;
  }
  return g;
}

Eigen::MatrixXd input_jacobian(const Network& net, const Eigen::VectorXd& input) {
  const auto a = forward_trace(net, input);
  const int layers = static_cast<int>(net.weights.size());
  Eigen::MatrixXd j =
      Eigen::MatrixXd::Identity(net.input_size(), net.input_size());
  for (int l = 0; l < layers; ++l) {
    const Activation act = (l + 1 == layers) ? net.output_activation
                                             : net.hidden_activation;
    const Eigen::VectorXd slope = a[l + 1].unaryExpr(
        [act](double y) { return activate_slope(act, y); });
    j = slope.asDiagonal() * (net.weights[l] * j).eval();
  }
  return j;
}

void TrainingConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be non-negative");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
  if (!(max_gradient_norm > 0.0)) {
    throw std::invalid_argument("max_gradient_norm must be positive");
  }
  if (epochs < 1 || batch_size < 1) {
    throw std::invalid_argument("epochs and batch_size must be positive");
  }
}

Optimizer::Optimizer(const Network& net, const TrainingConfig& config)
    : config_(config), velocity_(zero_gradients(net)) {
  config_.validate();
}

bool Optimizer::step(Network& net, const Gradients& g) {
  if (!g.finite()) {
    ++skipped_;
    return false;
  }
  const double n = g.norm();
  const double scale =
      n > config_.max_gradient_norm ? config_.max_gradient_norm / n : 1.0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    velocity_.weights[l] = config_.momentum * velocity_.weights[l] + scale * g.weights[l];
    velocity_.biases[l] = config_.momentum * velocity_.biases[l] + scale * g.biases[l];
    net.weights[l] -= config_.learning_rate * velocity_.weights[l];
    net.biases[l] -= config_.learning_rate * velocity_.biases[l];
  }
  return true;
}

std::vector<std::uint8_t> serialize(const Network& net) {
  net.validate();
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  append_u32(out, kFormatVersion);
  append_u32(out, static_cast<std::uint32_t>(net.layer_sizes.size()));
  for (int s : net.layer_sizes) append_u32(out, static_cast<std::uint32_t>(s));
  for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
    const auto& w = net.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) append_f64(out, w(r, c));
    }
    for (Eigen::Index r = 0; r < net.biases[l].size(); ++r) {
      append_f64(out, net.biases[l](r));
    }
  }
  return out;
}

Network deserialize(const std::vector<std::uint8_t>& bytes) {
  ByteReader in(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::runtime_error("not a network stream (bad magic tag)");
  }
  in.u32();  // magic, already checked
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion) {
    throw std::runtime_error("network format version mismatch: expected " +
                             std::to_string(kFormatVersion) + ", found " +
                             std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  if (count < 2 || count > 64) {
    throw std::runtime_error("implausible layer count in network stream");
  }
  Network net;
  for (std::uint32_t k = 0; k < count; ++k) {
    net.layer_sizes.push_back(static_cast<int>(in.u32()));
  }
  for (std::uint32_t l = 0; l + 1 < count; ++l) {
    const int rows = net.layer_sizes[l + 1];
    const int cols = net.layer_sizes[l];
    if (rows <= 0 || cols <= 0) {
      throw std::runtime_error("corrupt layer sizes in network stream");
    }
    Eigen::MatrixXd w(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) w(r, c) = in.f64();
    }
    Eigen::VectorXd b(rows);
    for (int r = 0; r < rows; ++r) b(r) = in.f64();
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  if (!in.exhausted()) {
    throw std::runtime_error("trailing bytes after network stream");
  }
  net.validate();
  return net;
}

void save_network(const Network& net, const std::string& path) {
  const auto bytes = serialize(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write network file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write on network file: " + path);
}

Network load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read network file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace bcsim
