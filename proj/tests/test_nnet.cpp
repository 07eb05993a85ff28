#include "bcsim/nnet.hpp"

#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "bcsim/rng.hpp"
#include "fd_checks.hpp"

using namespace bcsim;

namespace {

Network linear_net(const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
  Network net;
  net.layer_sizes = {static_cast<int>(w.cols()), static_cast<int>(w.rows())};
  net.weights = {w};
  net.biases = {b};
  net.hidden_activation = Activation::Identity;
  net.output_activation = Activation::Identity;
  return net;
}

}  // namespace

TEST_CASE("forward propagates zeros and identity maps") {
  Network zeros = make_network({3, 4, 2}, 1);
  for (auto& w : zeros.weights) w.setZero();
  const Eigen::VectorXd out = forward(zeros, Eigen::Vector3d(1.0, -2.0, 0.5));
  CHECK(out.isZero());

  const Network id = linear_net(Eigen::MatrixXd::Identity(3, 3),
                                Eigen::VectorXd::Zero(3));
  const Eigen::Vector3d x(0.3, -4.0, 2.5);
  CHECK(forward(id, x) == x);
}

TEST_CASE("forward matches an independent evaluation of a fixed 2-3-1 net") {
  Network net;
  net.layer_sizes = {2, 3, 1};
  Eigen::MatrixXd w0(3, 2);
  w0 << 0.1, -0.2, 0.3, 0.4, -0.5, 0.6;
  Eigen::VectorXd b0(3);
  b0 << 0.01, -0.02, 0.03;
  Eigen::MatrixXd w1(1, 3);
  w1 << 1.0, -1.5, 2.0;
  Eigen::VectorXd b1(1);
  b1 << 0.1;
  net.weights = {w0, w1};
  net.biases = {b0, b1};

  // Same arithmetic spelled out by hand.
  const double h1 = std::tanh(0.1 * 0.5 + (-0.2) * (-0.5) + 0.01);
  const double h2 = std::tanh(0.3 * 0.5 + 0.4 * (-0.5) + (-0.02));
  const double h3 = std::tanh(-0.5 * 0.5 + 0.6 * (-0.5) + 0.03);
  const double expect = 1.0 * h1 - 1.5 * h2 + 2.0 * h3 + 0.1;

  const Eigen::VectorXd out = forward(net, Eigen::Vector2d(0.5, -0.5));
  CHECK(out(0) == Catch::Approx(expect).epsilon(1e-15));
  CHECK(out(0) == Catch::Approx(-0.5919230).epsilon(1e-6));
}

TEST_CASE("parameter gradients: closed forms and finite differences") {
  SECTION("zero cotangent zeroes every gradient") {
    const Network net = make_network({3, 5, 2}, 2);
    const Gradients g =
        grad_params(net, Eigen::Vector3d(0.2, -0.1, 0.4), Eigen::Vector2d(0, 0));
    for (const auto& w : g.weights) CHECK(w.isZero());
    for (const auto& b : g.biases) CHECK(b.isZero());
  }

  SECTION("affine layer closed form") {
    Eigen::MatrixXd w(2, 3);
    w << 1, 2, 3, 4, 5, 6;
    const Network net = linear_net(w, Eigen::Vector2d(0.5, -0.5));
    const Eigen::Vector3d x(0.1, 0.2, 0.3);
    const Eigen::Vector2d c(2.0, -1.0);
    const Gradients g = grad_params(net, x, c);
    CHECK(g.weights[0].isApprox(c * x.transpose(), 1e-14));
    CHECK(g.biases[0].isApprox(c, 1e-14));
  }

  SECTION("finite-difference oracle across shapes and activations") {
    Rng rng(17);
    for (int k = 0; k < 20; ++k) {
      const std::vector<int> shape = {2 + int(rng.uniform_int(3)),
                                      3 + int(rng.uniform_int(6)),
                                      3 + int(rng.uniform_int(6)),
                                      1 + int(rng.uniform_int(4))};
      const Activation out =
          k % 2 == 0 ? Activation::Identity : Activation::Logistic;
      const Network net = make_network(shape, rng.next_u64(), Activation::Tanh, out);
      Eigen::VectorXd x(shape.front());
      for (int i = 0; i < x.size(); ++i) x(i) = rng.uniform(-2.0, 2.0);
      Eigen::VectorXd c(shape.back());
      for (int i = 0; i < c.size(); ++i) c(i) = rng.uniform(-1.0, 1.0);
      CHECK(fd::check_grad_params(net, x, c) == 0);
    }
  }
}

TEST_CASE("input Jacobians: closed forms and finite differences") {
  SECTION("linear composition") {
    Network net;
    net.layer_sizes = {3, 2, 2};
    Eigen::MatrixXd w0(2, 3), w1(2, 2);
    w0 << 1, 0, -1, 2, 1, 0;
    w1 << 0.5, 1.5, -2, 1;
    net.weights = {w0, w1};
    net.biases = {Eigen::VectorXd::Constant(2, 0.3), Eigen::VectorXd::Constant(2, -0.7)};
    net.hidden_activation = Activation::Identity;
    const Eigen::MatrixXd j = input_jacobian(net, Eigen::Vector3d(1, 2, 3));
    CHECK(j.isApprox(w1 * w0, 1e-14));
  }

  SECTION("zero-weight tanh net is constant") {
    Network net = make_network({4, 6, 3}, 3);
    for (auto& w : net.weights) w.setZero();
    CHECK(input_jacobian(net, Eigen::Vector4d(1, -1, 2, -2)).isZero());
  }

  SECTION("finite-difference oracle") {
    Rng rng(23);
    for (int k = 0; k < 20; ++k) {
      const std::vector<int> shape = {1 + int(rng.uniform_int(5)),
                                      4 + int(rng.uniform_int(5)),
                                      1 + int(rng.uniform_int(4))};
      const Activation out =
          k % 2 == 0 ? Activation::Identity : Activation::Logistic;
      const Network net = make_network(shape, rng.next_u64(), Activation::Tanh, out);
      Eigen::VectorXd x(shape.front());
      for (int i = 0; i < x.size(); ++i) x(i) = rng.uniform(-2.0, 2.0);
      CHECK(fd::check_input_jacobian(net, x) == 0);
    }
  }
}

TEST_CASE("optimizer arithmetic") {
  Network net = linear_net(Eigen::MatrixXd::Constant(1, 1, 1.0),
                           Eigen::VectorXd::Zero(1));
  Gradients g = zero_gradients(net);

  SECTION("zero gradients leave the network unchanged") {
    TrainingConfig cfg;
    Optimizer opt(net, cfg);
    CHECK(opt.step(net, g));
    CHECK(net.weights[0](0, 0) == 1.0);
  }

  SECTION("plain descent step") {
    g.weights[0](0, 0) = 2.0;
    TrainingConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.0;
    cfg.max_gradient_norm = 10.0;
    Optimizer opt(net, cfg);
    opt.step(net, g);
    CHECK(net.weights[0](0, 0) == Catch::Approx(0.8).epsilon(1e-15));
  }

  SECTION("clipping rescales to the norm cap") {
    g.weights[0](0, 0) = 10.0;
    TrainingConfig cfg;
    cfg.learning_rate = 1.0;
    cfg.momentum = 0.0;
    cfg.max_gradient_norm = 1.0;
    Optimizer opt(net, cfg);
    opt.step(net, g);
    // Applied step is the gradient scaled by 0.1.
    CHECK(net.weights[0](0, 0) == Catch::Approx(0.0).margin(1e-15));
  }

  SECTION("zero learning rate is the identity on parameters") {
    g.weights[0](0, 0) = 5.0;
    TrainingConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.momentum = 0.5;
    Optimizer opt(net, cfg);
    opt.step(net, g);
    opt.step(net, g);
    CHECK(net.weights[0](0, 0) == 1.0);
  }

  SECTION("momentum recurrence") {
    TrainingConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.5;
    cfg.max_gradient_norm = 100.0;
    Optimizer opt(net, cfg);
    g.weights[0](0, 0) = 1.0;
    opt.step(net, g);  // v = 1,   w = 1 - 0.1
    opt.step(net, g);  // v = 1.5, w = 0.9 - 0.15
    CHECK(net.weights[0](0, 0) == Catch::Approx(0.75).epsilon(1e-15));
  }

  SECTION("non-finite gradients are skipped and counted") {
    g.weights[0](0, 0) = std::nan("");
    TrainingConfig cfg;
    Optimizer opt(net, cfg);
    CHECK_FALSE(opt.step(net, g));
    CHECK(net.weights[0](0, 0) == 1.0);
    CHECK(opt.skipped_steps() == 1);
  }
}

TEST_CASE("serialization round-trips and rejects malformed streams") {
  const Network net = make_network({4, 8, 8, 2}, 99);
  const auto bytes = serialize(net);
  const Network back = deserialize(bytes);
  REQUIRE(back.layer_sizes == net.layer_sizes);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    CHECK(back.weights[l] == net.weights[l]);
    CHECK(back.biases[l] == net.biases[l]);
  }

  SECTION("truncated stream") {
    auto cut = bytes;
    cut.resize(cut.size() - 5);
    CHECK_THROWS_WITH(deserialize(cut), Catch::Matchers::ContainsSubstring("truncated"));
  }

  SECTION("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_WITH(deserialize(bad), Catch::Matchers::ContainsSubstring("magic"));
  }

  SECTION("version mismatch names both versions") {
    auto bad = bytes;
    bad[4] = 9;  // little-endian version field
    CHECK_THROWS_WITH(deserialize(bad),
                      Catch::Matchers::ContainsSubstring("expected 1") &&
                          Catch::Matchers::ContainsSubstring("found 9"));
  }

  SECTION("trailing bytes") {
    auto bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_WITH(deserialize(bad), Catch::Matchers::ContainsSubstring("trailing"));
  }

  SECTION("file round-trip") {
    const std::string path = "nnet_roundtrip.bin";
    save_network(net, path);
    const Network loaded = load_network(path);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      CHECK(loaded.weights[l] == net.weights[l]);
    }
    std::remove(path.c_str());
  }
}

TEST_CASE("seeded construction and training are bit-deterministic") {
  const Network a = make_network({3, 6, 2}, 42);
  const Network b = make_network({3, 6, 2}, 42);
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    REQUIRE(a.weights[l] == b.weights[l]);
  }

  Network ta = a, tb = b;
  TrainingConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.9;
  Optimizer oa(ta, cfg), ob(tb, cfg);
  Rng rng(5);
  for (int k = 0; k < 25; ++k) {
    Eigen::VectorXd x(3), c(2);
    for (int i = 0; i < 3; ++i) x(i) = rng.uniform(-1, 1);
    for (int i = 0; i < 2; ++i) c(i) = rng.uniform(-1, 1);
    oa.step(ta, grad_params(ta, x, c));
    ob.step(tb, grad_params(tb, x, c));
  }
  for (std::size_t l = 0; l < ta.weights.size(); ++l) {
    REQUIRE(ta.weights[l] == tb.weights[l]);
    REQUIRE(ta.biases[l] == tb.biases[l]);
  }
}
