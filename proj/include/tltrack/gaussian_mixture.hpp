#pragma once

// Fixed-dimension Gaussian mixtures fitted by penalized (MAP) expectation-maximization,
// plus Gaussian block conditioning.
//
// Objective maximized by the fit:
//   F = sum_i log sum_k w_k N(x_i; mu_k, S_k)  +  (alpha - 1) sum_k log w_k  -  (lambda / 2) sum_k tr(S_k^-1)
// with a symmetric Dirichlet(alpha) weight prior and lambda = ridge * N. The covariance M-step
// is then S_k = (scatter_k + lambda I) / N_k, which equals "sample covariance + ridge I" for a
// single component and keeps every eigenvalue >= ridge. Components whose weight falls below
// min_weight are removed and the rest renormalized.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tltrack/errors.hpp"

namespace tltrack {

struct MixtureFitOptions {
  double alpha = 0.0;  // Dirichlet concentration; <= 0 selects 1/K
  double ridge = 1e-6;
  double min_weight = 1e-3;
  int max_iterations = 200;
  double tolerance = 1e-6;  // relative change of the objective
};

struct ObjectivePoint {
  double objective = 0.0;
  int components = 0;
};

struct MixtureDiagnostics {
  double final_objective = 0.0;
  int iterations = 0;
  int pruned = 0;
  bool converged = false;
  std::vector<ObjectivePoint> trace;  // objective after every E-step
};

template <int Dim>
struct GaussianMixture {
  using Point = Eigen::Matrix<double, Dim, 1>;
  using Cov = Eigen::Matrix<double, Dim, Dim>;

  std::vector<double> weights;
  std::vector<Point> means;
  std::vector<Cov> covariances;
  MixtureDiagnostics diagnostics;

  int size() const noexcept { return static_cast<int>(weights.size()); }
};

namespace detail {

template <int Dim>
struct CholeskyComponent {
  Eigen::LLT<Eigen::Matrix<double, Dim, Dim>> llt;
  double log_norm = 0.0;  // -0.5 * (Dim log 2pi + log|S|)
};

template <int Dim>
CholeskyComponent<Dim> factor(const Eigen::Matrix<double, Dim, Dim>& cov, int index) {
  CholeskyComponent<Dim> c;
  c.llt.compute(cov);
  if (c.llt.info() != Eigen::Success)
    throw NumericError("covariance of component " + std::to_string(index) + " is not positive definite");
  const Eigen::Matrix<double, Dim, 1> diag = c.llt.matrixL().toDenseMatrix().diagonal();
  double log_det = 0.0;
  for (int d = 0; d < Dim; ++d) {
    if (!(diag[d] > 0.0))
      throw NumericError("covariance of component " + std::to_string(index) + " collapsed");
    log_det += 2.0 * std::log(diag[d]);
  }
  c.log_norm = -0.5 * (Dim * std::log(2.0 * std::numbers::pi) + log_det);
  return c;
}

template <int Dim>
double log_gauss(const CholeskyComponent<Dim>& c, const Eigen::Matrix<double, Dim, 1>& diff) {
  const Eigen::Matrix<double, Dim, 1> y = c.llt.matrixL().solve(diff);
  return c.log_norm - 0.5 * y.squaredNorm();
}

inline double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace detail

/// Log density of a point under the mixture.
template <int Dim>
double log_density(const GaussianMixture<Dim>& gmm, const typename GaussianMixture<Dim>::Point& x) {
  std::vector<double> terms(gmm.weights.size());
  for (int k = 0; k < gmm.size(); ++k) {
    const auto c = detail::factor<Dim>(gmm.covariances[k], k);
    terms[k] = std::log(gmm.weights[k]) + detail::log_gauss<Dim>(c, x - gmm.means[k]);
  }
  return detail::log_sum_exp(terms);
}

/// Index of the component with the largest responsibility for `x` (ties: lowest index).
template <int Dim>
int most_responsible(const GaussianMixture<Dim>& gmm, const typename GaussianMixture<Dim>::Point& x) {
  int best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < gmm.size(); ++k) {
    const auto c = detail::factor<Dim>(gmm.covariances[k], k);
    const double v = std::log(gmm.weights[k]) + detail::log_gauss<Dim>(c, x - gmm.means[k]);
    if (v > best_val) {
      best_val = v;
      best = k;
    }
  }
  return best;
}

/// MAP-EM fit with k-means++ seeding. Deterministic per seed.
template <int Dim>
GaussianMixture<Dim> fit_mixture(std::span<const Eigen::Matrix<double, Dim, 1>> samples, int k_components,
                                 std::uint64_t seed, const MixtureFitOptions& opts = {}) {
  using Point = Eigen::Matrix<double, Dim, 1>;
  using Cov = Eigen::Matrix<double, Dim, Dim>;
  const int n = static_cast<int>(samples.size());
  if (k_components < 1) throw ConfigError("mixture needs at least one component");
  if (k_components > n)
    throw ConfigError("mixture with " + std::to_string(k_components) + " components needs at least as many samples, got " +
                      std::to_string(n));
  if (!(opts.ridge > 0.0)) throw ConfigError("covariance ridge must be > 0");
  for (const auto& s : samples)
    if (!s.allFinite()) throw ValidationError("non-finite mixture sample");

  const double alpha = opts.alpha > 0.0 ? opts.alpha : 1.0 / k_components;
  const double lambda = opts.ridge * n;

  // k-means++ seeding followed by a hard assignment.
  std::mt19937_64 rng(seed);
  std::vector<Point> centers;
  centers.push_back(samples[std::uniform_int_distribution<int>(0, n - 1)(rng)]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k_components) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (samples[i] - centers.back()).squaredNorm());
      total += d2[i];
    }
    int pick = 0;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        if (u < d2[i]) {
          pick = i;
          break;
        }
        u -= d2[i];
      }
    } else {
      pick = std::uniform_int_distribution<int>(0, n - 1)(rng);
    }
    centers.push_back(samples[pick]);
  }
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k_components);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int k = 1; k < k_components; ++k)
      if ((samples[i] - centers[k]).squaredNorm() < (samples[i] - centers[best]).squaredNorm()) best = k;
    resp(i, best) = 1.0;
  }

  GaussianMixture<Dim> gmm;
  auto m_step = [&]() {
    const int k_now = static_cast<int>(resp.cols());
    std::vector<double> w(k_now);
    std::vector<Point> mu(k_now);
    std::vector<Cov> cov(k_now);
    std::vector<int> keep;
    double w_total = 0.0;
    for (int k = 0; k < k_now; ++k) {
      const double nk = resp.col(k).sum();
      w[k] = std::max(0.0, nk + alpha - 1.0);
      w_total += w[k];
      if (!(nk > 0.0)) continue;
      Point m = Point::Zero();
      for (int i = 0; i < n; ++i) m += resp(i, k) * samples[i];
      m /= nk;
      Cov scatter = Cov::Zero();
      for (int i = 0; i < n; ++i) {
        const Point d = samples[i] - m;
        scatter += resp(i, k) * d * d.transpose();
      }
      mu[k] = m;
      cov[k] = (scatter + lambda * Cov::Identity()) / nk;
      cov[k] = 0.5 * (cov[k] + cov[k].transpose()).eval();
    }
    if (!(w_total > 0.0)) throw NumericError("all mixture weights vanished");
    for (int k = 0; k < k_now; ++k)
      if (w[k] > 0.0 && w[k] / w_total >= opts.min_weight) keep.push_back(k);
    gmm.diagnostics.pruned += k_now - static_cast<int>(keep.size());
    double kept_total = 0.0;
    for (int k : keep) kept_total += w[k];
    gmm.weights.clear();
    gmm.means.clear();
    gmm.covariances.clear();
    for (int k : keep) {
      gmm.weights.push_back(w[k] / kept_total);
      gmm.means.push_back(mu[k]);
      gmm.covariances.push_back(cov[k]);
    }
  };

  // Fills resp and returns the penalized objective at the current parameters.
  auto e_step = [&]() {
    const int k_now = gmm.size();
    std::vector<detail::CholeskyComponent<Dim>> chol;
    chol.reserve(k_now);
    double penalty = 0.0;
    for (int k = 0; k < k_now; ++k) {
      chol.push_back(detail::factor<Dim>(gmm.covariances[k], k));
      const Cov inv = chol.back().llt.solve(Cov::Identity());
      penalty += (alpha - 1.0) * std::log(gmm.weights[k]) - 0.5 * lambda * inv.trace();
    }
    resp.resize(n, k_now);
    std::vector<double> row(k_now);
    double loglik = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < k_now; ++k)
        row[k] = std::log(gmm.weights[k]) + detail::log_gauss<Dim>(chol[k], samples[i] - gmm.means[k]);
      const double lse = detail::log_sum_exp(row);
      loglik += lse;
      for (int k = 0; k < k_now; ++k) resp(i, k) = std::exp(row[k] - lse);
    }
    return loglik + penalty;
  };

  m_step();
  for (int it = 0; it < opts.max_iterations; ++it) {
    const double obj = e_step();
    if (!std::isfinite(obj)) throw NumericError("mixture objective became non-finite at iteration " + std::to_string(it));
    auto& trace = gmm.diagnostics.trace;
    trace.push_back({obj, gmm.size()});
    gmm.diagnostics.iterations = it;
    if (trace.size() >= 2) {
      const auto& prev = trace[trace.size() - 2];
      if (prev.components == gmm.size() && std::abs(obj - prev.objective) <= opts.tolerance * std::abs(prev.objective)) {
        gmm.diagnostics.converged = true;
        break;
      }
    }
    m_step();
  }
  if (!gmm.diagnostics.converged) {
    // The loop ended on an M-step; score the final parameters.
    const double obj = e_step();
    gmm.diagnostics.trace.push_back({obj, gmm.size()});
    gmm.diagnostics.iterations = opts.max_iterations;
  }
  gmm.diagnostics.final_objective = gmm.diagnostics.trace.back().objective;
  return gmm;
}

template <int Dim>
GaussianMixture<Dim> fit_mixture(const std::vector<Eigen::Matrix<double, Dim, 1>>& samples, int k_components,
                                 std::uint64_t seed, const MixtureFitOptions& opts = {}) {
  return fit_mixture<Dim>(std::span<const Eigen::Matrix<double, Dim, 1>>(samples), k_components, seed, opts);
}

/// Distribution of the trailing Dim-P coordinates given the leading P coordinates.
template <int Dim>
struct ConditionalMixture {
  using Point = Eigen::Matrix<double, Dim, 1>;
  using Cov = Eigen::Matrix<double, Dim, Dim>;

  std::vector<double> weights;
  std::vector<Point> means;
  std::vector<Cov> covariances;

  Point mean() const {
    Point m = Point::Zero();
    for (std::size_t k = 0; k < weights.size(); ++k) m += weights[k] * means[k];
    return m;
  }

  template <typename Rng>
  Point sample(Rng& rng) const {
    const int k = std::discrete_distribution<int>(weights.begin(), weights.end())(rng);
    Eigen::LLT<Cov> llt(covariances[k]);
    if (llt.info() != Eigen::Success) throw NumericError("conditional covariance not positive definite");
    std::normal_distribution<double> normal;
    Point z;
    for (int d = 0; d < Dim; ++d) z[d] = normal(rng);
    return means[k] + llt.matrixL() * z;
  }
};

/// Conditions every component on the leading P coordinates equal to `x0` and reweights
/// by each component's marginal density at x0.
template <int P, int Dim>
ConditionalMixture<Dim - P> condition(const GaussianMixture<Dim>& gmm, const Eigen::Matrix<double, P, 1>& x0) {
  static_assert(P > 0 && P < Dim);
  constexpr int Q = Dim - P;
  using CovP = Eigen::Matrix<double, P, P>;
  if (gmm.size() == 0) throw StateError("mixture has no components");
  if (!x0.allFinite()) throw ValidationError("conditioning point is not finite");

  ConditionalMixture<Q> out;
  std::vector<double> log_w;
  for (int k = 0; k < gmm.size(); ++k) {
    const auto& mu = gmm.means[k];
    const auto& s = gmm.covariances[k];
    const CovP sxx = s.template topLeftCorner<P, P>();
    const Eigen::Matrix<double, Q, P> svx = s.template bottomLeftCorner<Q, P>();
    const auto c = detail::factor<P>(sxx, k);
    const Eigen::Matrix<double, P, 1> dx = x0 - mu.template head<P>();
    // gain = S_vx S_xx^-1
    const Eigen::Matrix<double, Q, P> gain = c.llt.solve(svx.transpose()).transpose();
    out.means.push_back(mu.template tail<Q>() + gain * dx);
    Eigen::Matrix<double, Q, Q> cc = s.template bottomRightCorner<Q, Q>() - gain * svx.transpose();
    out.covariances.push_back(0.5 * (cc + cc.transpose()));
    log_w.push_back(std::log(gmm.weights[k]) + detail::log_gauss<P>(c, dx));
  }
  const double mx = *std::max_element(log_w.begin(), log_w.end());
  if (!(mx >= std::log(std::numeric_limits<double>::min())))
    throw OutOfSupportError("every component density underflows at the conditioning point");
  double total = 0.0;
  for (double lw : log_w) {
    out.weights.push_back(std::exp(lw - mx));
    total += out.weights.back();
  }
  for (double& w : out.weights) w /= total;
  return out;
}

// Persistence ---------------------------------------------------------------

template <int Dim>
nlohmann::json mixture_to_json(const GaussianMixture<Dim>& gmm) {
  nlohmann::json j;
  j["dim"] = Dim;
  j["K"] = gmm.size();
  j["weights"] = gmm.weights;
  nlohmann::json means = nlohmann::json::array();
  nlohmann::json covs = nlohmann::json::array();
  for (int k = 0; k < gmm.size(); ++k) {
    means.push_back(std::vector<double>(gmm.means[k].data(), gmm.means[k].data() + Dim));
    std::vector<double> row_major;
    for (int r = 0; r < Dim; ++r)
      for (int c = 0; c < Dim; ++c) row_major.push_back(gmm.covariances[k](r, c));
    covs.push_back(row_major);
  }
  j["means"] = means;
  j["covariances"] = covs;
  std::vector<double> trace;
  for (const auto& t : gmm.diagnostics.trace) trace.push_back(t.objective);
  j["diagnostics"] = {{"final_objective", gmm.diagnostics.final_objective},
                      {"iterations", gmm.diagnostics.iterations},
                      {"pruned", gmm.diagnostics.pruned},
                      {"converged", gmm.diagnostics.converged},
                      {"objective_trace", trace}};
  return j;
}

template <int Dim>
GaussianMixture<Dim> mixture_from_json(const nlohmann::json& j) {
  try {
    if (j.at("dim").get<int>() != Dim) throw ValidationError("mixture dimension mismatch");
    const int k = j.at("K").get<int>();
    GaussianMixture<Dim> gmm;
    gmm.weights = j.at("weights").get<std::vector<double>>();
    const auto& means = j.at("means");
    const auto& covs = j.at("covariances");
    if (k < 1 || static_cast<int>(gmm.weights.size()) != k || static_cast<int>(means.size()) != k ||
        static_cast<int>(covs.size()) != k)
      throw ValidationError("mixture component count is inconsistent");
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
      const auto m = means[c].get<std::vector<double>>();
      const auto s = covs[c].get<std::vector<double>>();
      if (static_cast<int>(m.size()) != Dim || static_cast<int>(s.size()) != Dim * Dim)
        throw ValidationError("mixture component " + std::to_string(c) + " has wrong dimensions");
      if (!(gmm.weights[c] > 0.0)) throw ValidationError("mixture weights must be positive");
      total += gmm.weights[c];
      gmm.means.push_back(Eigen::Map<const Eigen::Matrix<double, Dim, 1>>(m.data()));
      gmm.covariances.push_back(Eigen::Map<const Eigen::Matrix<double, Dim, Dim, Eigen::RowMajor>>(s.data()));
    }
    if (std::abs(total - 1.0) > 1e-9) throw ValidationError("mixture weights do not sum to 1");
    if (j.contains("diagnostics")) {
      const auto& d = j["diagnostics"];
      gmm.diagnostics.final_objective = d.value("final_objective", 0.0);
      gmm.diagnostics.iterations = d.value("iterations", 0);
      gmm.diagnostics.pruned = d.value("pruned", 0);
      gmm.diagnostics.converged = d.value("converged", false);
    }
    return gmm;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed mixture document: ") + e.what());
  }
}

}  // namespace tltrack
