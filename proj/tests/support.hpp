#pragma once

// Shared fixtures for the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "tltrack/tltrack.hpp"

namespace tltrack::testing {

struct RandomBatch {
  nn::Matrix x;
  BatchLabels labels;
};

/// Random features and labels for every head, rot labels valid on roughly half the samples.
inline RandomBatch random_batch(int input_dim, int n_classes, int batch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  RandomBatch b;
  b.x.resize(input_dim, batch);
  for (Eigen::Index i = 0; i < b.x.size(); ++i) b.x.data()[i] = normal(rng);
  b.labels.time.resize(batch);
  b.labels.fungicide.resize(batch);
  b.labels.rot = nn::Vector::Zero(batch);
  b.labels.rot_valid.assign(static_cast<std::size_t>(batch), false);
  for (int j = 0; j < batch; ++j) {
    b.labels.time[j] = unit(rng);
    b.labels.variety.push_back(std::uniform_int_distribution<int>(0, std::max(0, n_classes - 1))(rng));
    b.labels.fungicide[j] = unit(rng) < 0.5 ? 1.0 : 0.0;
    if (j == 0 || unit(rng) < 0.5) {
      b.labels.rot_valid[static_cast<std::size_t>(j)] = true;
      b.labels.rot[j] = unit(rng) < 0.5 ? 1.0 : 0.0;
    }
  }
  return b;
}

/// Random biases so that no ReLU sits exactly at its kink for typical inputs.
inline void jitter_biases(PretextModel& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.1);
  nn::Vector p = flatten_parameters(m);
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += normal(rng) * 0.1;
  assign_parameters(m, p);
}

struct GradientCheck {
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  Eigen::Index parameters = 0;
};

/// Central differences on every parameter of L_total. Relative error uses
/// max(|analytic|, |numeric|, floor) as denominator.
inline GradientCheck check_gradient(const PretextModel& model, const nn::Matrix& x, const BatchLabels& labels,
                                    double h = 1e-6, double floor = 1e-6) {
  const auto lg = loss_and_gradient(model, x, labels, /*require_rot_labels=*/true);
  nn::Vector p = flatten_parameters(model);
  PretextModel probe = model;
  GradientCheck out;
  out.parameters = p.size();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double p0 = p[i];
    p[i] = p0 + h;
    assign_parameters(probe, p);
    const double up = total_loss(probe, forward_batch(probe, x), labels).total;
    p[i] = p0 - h;
    assign_parameters(probe, p);
    const double down = total_loss(probe, forward_batch(probe, x), labels).total;
    p[i] = p0;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = lg.gradient[i];
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_index = i;
    }
  }
  return out;
}

/// Points drawn around `centers` (one column per cluster) with isotropic spread.
inline Eigen::MatrixXd clusters(const Eigen::MatrixXd& centers, int per_cluster, double spread, std::uint64_t seed,
                                std::vector<int>* labels = nullptr) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd out(centers.rows(), centers.cols() * per_cluster);
  for (Eigen::Index c = 0; c < centers.cols(); ++c)
    for (int i = 0; i < per_cluster; ++i) {
      const auto col = c * per_cluster + i;
      for (Eigen::Index d = 0; d < centers.rows(); ++d) out(d, col) = centers(d, c) + spread * normal(rng);
      if (labels) labels->push_back(static_cast<int>(c));
    }
  return out;
}

}  // namespace tltrack::testing
