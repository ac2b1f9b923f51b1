#pragma once

// Small dense-network toolkit: fully connected layers with explicit backward passes,
// ReLU/sigmoid, MSE/BCE losses, He initialization and Adam.
// Batched routines keep one sample per column.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "tltrack/errors.hpp"

namespace tltrack::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kBceClamp = 1e-7;

struct DenseLayer {
  Matrix weights;  // out_dim x in_dim
  Vector bias;     // out_dim

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
  Eigen::Index parameter_count() const { return weights.size() + bias.size(); }
};

struct DenseGrad {
  Matrix weights;
  Vector bias;
};

inline void check_layer(const DenseLayer& layer) {
  if (layer.bias.size() != layer.weights.rows())
    throw ShapeError("dense layer bias length " + std::to_string(layer.bias.size()) + " != out_dim " +
                     std::to_string(layer.weights.rows()));
}

inline Vector dense_forward(const DenseLayer& layer, const Vector& input) {
  check_layer(layer);
  if (input.size() != layer.in_dim())
    throw ShapeError("dense input length " + std::to_string(input.size()) + " != in_dim " +
                     std::to_string(layer.in_dim()));
  return layer.weights * input + layer.bias;
}

/// Batched forward; `inputs` holds one sample per column.
inline Matrix dense_forward(const DenseLayer& layer, const Matrix& inputs) {
  check_layer(layer);
  if (inputs.rows() != layer.in_dim())
    throw ShapeError("dense input rows " + std::to_string(inputs.rows()) + " != in_dim " +
                     std::to_string(layer.in_dim()));
  Matrix out = layer.weights * inputs;
  out.colwise() += layer.bias;
  return out;
}

/// Given dL/d(output) for a batch, returns dL/d(input) and accumulates parameter gradients.
inline Matrix dense_backward(const DenseLayer& layer, const Matrix& inputs, const Matrix& grad_out,
                             DenseGrad& grad) {
  grad.weights = grad_out * inputs.transpose();
  grad.bias = grad_out.rowwise().sum();
  return layer.weights.transpose() * grad_out;
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& v) {
  return v.cwiseMax(0.0).eval();
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& v) {
  return v.unaryExpr([](double x) {
            // Split by sign so neither branch overflows.
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
          })
      .eval();
}

/// Backprop through ReLU given its pre-activation.
inline Matrix relu_backward(const Matrix& pre, const Matrix& grad_out) {
  return (pre.array() > 0.0).cast<double>().matrix().cwiseProduct(grad_out);
}

struct LossResult {
  double value = 0.0;
  Vector gradient;  // d loss / d pred
};

inline LossResult mse_loss(const Vector& pred, const Vector& target) {
  if (pred.size() != target.size() || pred.size() == 0)
    throw ShapeError("mse_loss needs equal non-empty lengths, got " + std::to_string(pred.size()) + " and " +
                     std::to_string(target.size()));
  const double n = static_cast<double>(pred.size());
  const Vector diff = pred - target;
  return {diff.squaredNorm() / n, (2.0 / n) * diff};
}

inline double clamp_probability(double p) { return std::clamp(p, kBceClamp, 1.0 - kBceClamp); }

/// Binary cross entropy on probabilities, clamped to [1e-7, 1-1e-7]; gradient evaluated at the clamped value.
inline LossResult bce_loss(const Vector& pred, const Vector& target) {
  if (pred.size() != target.size() || pred.size() == 0)
    throw ShapeError("bce_loss needs equal non-empty lengths, got " + std::to_string(pred.size()) + " and " +
                     std::to_string(target.size()));
  const double n = static_cast<double>(pred.size());
  LossResult out{0.0, Vector(pred.size())};
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double p = clamp_probability(pred[i]);
    const double y = target[i];
    out.value -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    out.gradient[i] = (p - y) / (p * (1.0 - p)) / n;
  }
  out.value /= n;
  return out;
}

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step_count = 0;
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_size(Eigen::Index n, double lr = 0.005) {
    AdamState s;
    s.first_moment = Vector::Zero(n);
    s.second_moment = Vector::Zero(n);
    s.lr = lr;
    return s;
  }
};

/// One bias-corrected Adam update in place. Throws NumericError naming the first
/// non-finite gradient entry; parameters and state are untouched in that case.
inline void adam_step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads, AdamState& state) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw ShapeError("adam_step: parameter, gradient and moment sizes disagree");
  for (Eigen::Index i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw NumericError("adam_step: non-finite gradient for parameter " + std::to_string(i));

  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double m_hat = state.first_moment[i] / c1;
    const double v_hat = state.second_moment[i] / c2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

/// Weights ~ N(0, 2/in_dim), zero bias.
inline DenseLayer he_init(Eigen::Index out_dim, Eigen::Index in_dim, std::uint64_t seed) {
  if (out_dim <= 0 || in_dim <= 0) throw ConfigError("he_init: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in_dim)));
  DenseLayer layer{Matrix(out_dim, in_dim), Vector::Zero(out_dim)};
  for (Eigen::Index c = 0; c < in_dim; ++c)
    for (Eigen::Index r = 0; r < out_dim; ++r) layer.weights(r, c) = normal(rng);
  return layer;
}

}  // namespace tltrack::nn
