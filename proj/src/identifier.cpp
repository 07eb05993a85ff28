#include "bcsim/identifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "bcsim/kv.hpp"
#include "bcsim/rng.hpp"

namespace bcsim {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

bool TrainingBox::contains(const FeatureVector& f, double duty,
                           const FeatureScaling& scaling) const {
  const double i = f.current_n * scaling.current_base;
  const double v = f.voltage_n * scaling.voltage_base;
  return i >= 0.0 && i <= current_max && v >= 0.0 && v <= voltage_max &&
         duty >= duty_min && duty <= duty_max;
}

void ExcitationSpec::validate() const {
  auto ordered = [](double lo, double hi) { return lo > 0.0 && lo <= hi; };
  if (!ordered(v_ref_min, v_ref_max) || !ordered(load_min, load_max) ||
      !ordered(source_min, source_max)) {
    throw std::invalid_argument("excitation ranges must satisfy 0 < min <= max");
  }
  if (!(duty_dither >= 0.0 && duty_dither < 0.5)) {
    throw std::invalid_argument("duty dither must be in [0, 0.5)");
  }
  if (!(redraw_interval > 0.0) || !(episode_length > 0.0)) {
    throw std::invalid_argument("excitation intervals must be positive");
  }
  if (episode_count < 0) {
    throw std::invalid_argument("episode count must be non-negative");
  }
}

std::vector<TransitionSample> filter_in_box(
    const std::vector<TransitionSample>& samples, const TrainingBox& box,
    const FeatureScaling& scaling) {
  std::vector<TransitionSample> kept;
  kept.reserve(samples.size());
  for (const TransitionSample& s : samples) {
    if (box.contains(s.now, s.duty, scaling)) kept.push_back(s);
  }
  return kept;
}

Dataset generate_dataset(const ExcitationSpec& spec, const PIGains& pi,
                         const ConverterParams& params,
                         const FeatureScaling& scaling) {
  spec.validate();
  pi.validate();
  params.validate();

  Dataset out;
  const int periods =
      static_cast<int>(std::llround(spec.episode_length / params.control_period));
  out.samples.reserve(static_cast<std::size_t>(periods) * spec.episode_count);

  for (int ep = 0; ep < spec.episode_count; ++ep) {
    Rng rng(mix_seed(spec.rng_seed, static_cast<std::uint64_t>(ep)));
    ConverterParams p = params;
    ConverterState state{0.0, 0.0};
    PIState pi_state;
    double v_ref = rng.uniform(spec.v_ref_min, spec.v_ref_max);
    p.load_resistance = rng.uniform(spec.load_min, spec.load_max);
    p.source_voltage = rng.uniform(spec.source_min, spec.source_max);
    double next_redraw = spec.redraw_interval;

    std::vector<TransitionSample> episode;
    episode.reserve(periods);
    bool healthy = true;
    for (int k = 0; k < periods; ++k) {
      const double t = k * p.control_period;
      if (t >= next_redraw - 0.5 * p.control_period) {
        v_ref = rng.uniform(spec.v_ref_min, spec.v_ref_max);
        p.load_resistance = rng.uniform(spec.load_min, spec.load_max);
        p.source_voltage = rng.uniform(spec.source_min, spec.source_max);
        next_redraw += spec.redraw_interval;
      }
      const FeatureVector now = make_features(state, v_ref, p.source_voltage, scaling);
      const PIOutput cmd =
          pi_step(pi_state, pi, v_ref - state.output_voltage, p.control_period);
      pi_state = cmd.state;
      const double duty =
          std::clamp(cmd.duty + rng.uniform(-spec.duty_dither, spec.duty_dither),
                     pi.duty_min, pi.duty_max);
      const ConverterState next = step_period(state, duty, p);
      if (!std::isfinite(next.inductor_current) ||
          !std::isfinite(next.output_voltage)) {
        healthy = false;
        break;
      }
      episode.push_back({now, duty,
                         make_features(next, v_ref, p.source_voltage, scaling),
                         p.load_resistance, p.source_voltage});
      state = next;
    }
    if (healthy) {
      out.samples.insert(out.samples.end(), episode.begin(), episode.end());
    } else {
      ++out.flagged_episodes;
    }
  }
  return out;
}

namespace {

constexpr const char* kDatasetHeader =
    "i_L,v_o,v_ref,v_s,R,duty,i_L_next,v_o_next";

// Physical quantities implied by a feature vector.
struct Physical {
  double i_l, v_o, v_ref, v_s;
};

Physical to_physical(const FeatureVector& f, const FeatureScaling& s) {
  const double v_o = f.voltage_n * s.voltage_base;
  return {f.current_n * s.current_base, v_o, v_o + f.error_n * s.voltage_base,
          f.source_n * s.voltage_base};
}

}  // namespace

void write_dataset_csv(const std::string& path,
                       const std::vector<TransitionSample>& samples,
                       const FeatureScaling& scaling) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out << kDatasetHeader << "\n";
  for (const TransitionSample& s : samples) {
    const Physical now = to_physical(s.now, scaling);
    const Physical next = to_physical(s.next, scaling);
    out << format_double(now.i_l) << ',' << format_double(now.v_o) << ','
        << format_double(now.v_ref) << ',' << format_double(now.v_s) << ','
        << format_double(s.load_resistance) << ',' << format_double(s.duty)
        << ',' << format_double(next.i_l) << ',' << format_double(next.v_o)
        << '\n';
  }
  if (!out) throw std::runtime_error("short write on dataset file: " + path);
}

std::vector<TransitionSample> read_dataset_csv(const std::string& path,
                                               const FeatureScaling& scaling) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kDatasetHeader) {
    throw std::runtime_error("unexpected dataset header in " + path);
  }
  std::vector<TransitionSample> samples;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    double v[8];
    for (int k = 0; k < 8; ++k) {
      if (!std::getline(ss, cell, ',')) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": expected 8 columns");
      }
      v[k] = parse_double(cell, path + ":" + std::to_string(lineno));
    }
    TransitionSample s;
    s.now = make_features(ConverterState{v[0], v[1]}, v[2], v[3], scaling);
    s.duty = v[5];
    s.next = make_features(ConverterState{v[6], v[7]}, v[2], v[3], scaling);
    s.load_resistance = v[4];
    s.source_voltage = v[3];
    samples.push_back(s);
  }
  return samples;
}

namespace {

Eigen::VectorXd model_input(const FeatureVector& f, double duty) {
  Eigen::VectorXd in(4);
  in << f.current_n, f.voltage_n, f.source_n, duty;
  return in;
}

Eigen::Vector2d pair_delta(const TransitionSample& s) {
  return Eigen::Vector2d(s.next.current_n - s.now.current_n,
                         s.next.voltage_n - s.now.voltage_n);
}

}  // namespace

ModelTrainResult train_model(const std::vector<TransitionSample>& dataset,
                             const TrainingConfig& config) {
  config.validate();
  const int n = static_cast<int>(dataset.size());
  if (n < 5) throw std::invalid_argument("model training needs at least 5 samples");

  Rng rng(config.rng_seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  }
  const int holdout = std::max(1, n / 5);
  const int train_n = n - holdout;
  std::vector<int> train(order.begin(), order.begin() + train_n);
  std::vector<int> held(order.begin() + train_n, order.end());

  ModelTrainResult result;
  result.net = make_network({4, 5, 5, 2}, mix_seed(config.rng_seed, 0xb0));
  Optimizer opt(result.net, config);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Half-cosine annealing: the configured rate is the peak and the final
    // epochs take vanishing steps, which settles the fit near a minimum.
    opt.set_learning_rate(config.learning_rate * 0.5 *
                          (1.0 + std::cos(kPi * epoch / config.epochs)));
    for (int i = train_n - 1; i > 0; --i) {
      std::swap(train[i], train[rng.uniform_int(i + 1)]);
    }
    double epoch_sse = 0.0;
    for (int start = 0; start < train_n; start += config.batch_size) {
      const int stop = std::min(train_n, start + config.batch_size);
      Gradients batch = zero_gradients(result.net);
      for (int k = start; k < stop; ++k) {
        const TransitionSample& s = dataset[train[k]];
        const Eigen::VectorXd in = model_input(s.now, s.duty);
        const Eigen::Vector2d err =
            Eigen::Vector2d(forward(result.net, in)) - pair_delta(s);
        epoch_sse += err.squaredNorm();
        const Gradients g = grad_params(result.net, in, err / (stop - start));
        for (std::size_t l = 0; l < batch.weights.size(); ++l) {
          batch.weights[l] += g.weights[l];
          batch.biases[l] += g.biases[l];
        }
      }
      opt.step(result.net, batch);
    }
    result.epoch_losses.push_back(epoch_sse / (2.0 * train_n));
  }

  double sse_i = 0.0, sse_v = 0.0;
  for (int idx : held) {
    const TransitionSample& s = dataset[idx];
    const Eigen::Vector2d err =
        Eigen::Vector2d(forward(result.net, model_input(s.now, s.duty))) -
        pair_delta(s);
    sse_i += err(0) * err(0);
    sse_v += err(1) * err(1);
  }
  result.holdout_rms_current = std::sqrt(sse_i / holdout);
  result.holdout_rms_voltage = std::sqrt(sse_v / holdout);
  return result;
}

Eigen::Vector2d model_predict(const Network& model, const FeatureVector& f,
                              double duty) {
  const Eigen::VectorXd delta = forward(model, model_input(f, duty));
  return Eigen::Vector2d(f.current_n + delta(0), f.voltage_n + delta(1));
}

FeatureJacobians model_jacobians(const Network& model, const FeatureVector& f,
                                 double duty, const FeatureScaling& scaling,
                                 const TrainingBox& box) {
  const Eigen::MatrixXd j = input_jacobian(model, model_input(f, duty));
  // Net columns are (i_n, v_n, s_n, duty); the error column is exactly zero
  // because the plant never sees the reference.
  Eigen::Matrix<double, 2, 4> d_pair_dx;
  d_pair_dx.col(0) = j.col(0);
  d_pair_dx.col(1) = j.col(1);
  d_pair_dx.col(2).setZero();
  d_pair_dx.col(3) = j.col(2);
  d_pair_dx(0, 0) += 1.0;  // the net predicts the change from the current pair
  d_pair_dx(1, 1) += 1.0;
  FeatureJacobians out = assemble_feature_jacobians(d_pair_dx, j.col(3));
  out.extrapolated = !box.contains(f, duty, scaling);
  return out;
}

namespace {

// Central difference where the domain allows, one-sided at its edges.
double fd_slope(const std::function<double(double)>& f, double x, double h,
                double lo, double hi) {
  const bool down = x - h >= lo;
  const bool up = x + h <= hi;
  if (down && up) return (f(x + h) - f(x - h)) / (2.0 * h);
  if (up) return (f(x + h) - f(x)) / h;
  return (f(x) - f(x - h)) / h;
}

}  // namespace

FeatureJacobians analytic_jacobians(const ConverterState& state, double duty,
                                    const ConverterParams& params,
                                    const FeatureScaling& scaling,
                                    double rel_step) {
  const double inf = std::numeric_limits<double>::infinity();
  auto next = [&](double i, double v, double u, double vs) {
    ConverterParams p = params;
    p.source_voltage = vs;
    return step_period(ConverterState{i, v}, u, p);
  };
  auto column = [&](const std::function<ConverterState(double)>& f, double x,
                    double floor, double lo, double hi) {
    const double h = rel_step * std::max(std::abs(x), floor);
    const Eigen::Vector2d di(
        fd_slope([&](double y) { return f(y).inductor_current; }, x, h, lo, hi),
        fd_slope([&](double y) { return f(y).output_voltage; }, x, h, lo, hi));
    return di;
  };

  const double i0 = state.inductor_current;
  const double v0 = state.output_voltage;
  const double vs0 = params.source_voltage;
  const Eigen::Vector2d d_i =
      column([&](double x) { return next(x, v0, duty, vs0); }, i0, 1.0, 0.0, inf);
  const Eigen::Vector2d d_v =
      column([&](double x) { return next(i0, x, duty, vs0); }, v0, 1.0, 0.0, inf);
  const Eigen::Vector2d d_u =
      column([&](double x) { return next(i0, v0, x, vs0); }, duty, 1.0, 0.0, 1.0);
  const Eigen::Vector2d d_vs =
      column([&](double x) { return next(i0, v0, duty, x); }, vs0, 1.0, 0.0, inf);

  // Rescale physical sensitivities into normalized feature units. Varying the
  // error feature alone means varying the reference, which the plant never
  // sees, so that column is zero.
  const double ib = scaling.current_base;
  const double vb = scaling.voltage_base;
  Eigen::Matrix<double, 2, 4> d_pair_dx;
  d_pair_dx << d_i(0), d_v(0) * vb / ib, 0.0, d_vs(0) * vb / ib,
      d_i(1) * ib / vb, d_v(1), 0.0, d_vs(1);
  const Eigen::Vector2d d_pair_du(d_u(0) / ib, d_u(1) / vb);
  return assemble_feature_jacobians(d_pair_dx, d_pair_du);
}

JacobianFn make_model_jacobian_fn(Network model, FeatureScaling scaling,
                                  TrainingBox box) {
  model.validate();
  return [model = std::move(model), scaling, box](
             const FeatureVector& f, double duty,
             const ConverterParams&) {
    return model_jacobians(model, f, duty, scaling, box);
  };
}

JacobianFn make_analytic_jacobian_fn(FeatureScaling scaling) {
  return [scaling](const FeatureVector& f, double duty,
                   const ConverterParams& params) {
    const ConverterState state{f.current_n * scaling.current_base,
                               f.voltage_n * scaling.voltage_base};
    return analytic_jacobians(state, duty, params, scaling);
  };
}

}  // namespace bcsim
