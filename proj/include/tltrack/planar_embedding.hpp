#pragma once

// UMAP-style projection of encoder latents to the plane: exact kNN graph, fuzzy
// simplicial weights, curve fit for the low-dimensional similarity kernel, SGD layout
// with negative sampling, and out-of-sample transform against a frozen reference.
// Points are stored one per column.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tltrack/errors.hpp"
#include "tltrack/random.hpp"

namespace tltrack {

struct EmbeddingParams {
  int n_neighbors = 15;
  double min_dist = 0.1;
  int epochs = 500;
  int negative_samples = 5;
  double learning_rate = 1.0;
  double init_std = 1e-2;
  std::uint64_t seed = 0;
};

struct NeighborLists {
  std::vector<std::vector<int>> indices;      // per point, ascending distance
  std::vector<std::vector<double>> distances;
  int k = 0;
};

struct FuzzyEdge {
  int i = 0;
  int j = 0;  // i < j
  double weight = 0.0;
};

struct FuzzyGraph {
  int n_points = 0;
  std::vector<double> rho;
  std::vector<double> sigma;
  std::vector<bool> sigma_fallback;  // binary search did not converge
  std::vector<std::vector<double>> directed_weights;  // aligned with NeighborLists
  std::vector<FuzzyEdge> edges;                       // symmetrized, sorted by (i, j)

  int fallback_count() const {
    return static_cast<int>(std::count(sigma_fallback.begin(), sigma_fallback.end(), true));
  }
};

struct PlanarEmbedding {
  EmbeddingParams params;
  double a = 0.0;
  double b = 0.0;
  Eigen::MatrixXd latents;  // latent_dim x n
  Eigen::Matrix2Xd coords;  // 2 x n

  int size() const { return static_cast<int>(latents.cols()); }
};

namespace detail {

/// Exact k nearest neighbors of `query` among the columns of `ref`, ordered by
/// (distance, index). `skip` excludes one reference column (the query itself).
inline std::pair<std::vector<int>, std::vector<double>> nearest(const Eigen::MatrixXd& ref,
                                                                const Eigen::VectorXd& query, int k,
                                                                int skip = -1) {
  std::vector<std::pair<double, int>> cand;
  cand.reserve(static_cast<std::size_t>(ref.cols()));
  for (Eigen::Index j = 0; j < ref.cols(); ++j) {
    if (j == skip) continue;
    cand.emplace_back(std::sqrt((ref.col(j) - query).squaredNorm()), static_cast<int>(j));
  }
  const auto kk = static_cast<std::size_t>(k);
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end());
  std::pair<std::vector<int>, std::vector<double>> out;
  for (std::size_t m = 0; m < kk; ++m) {
    out.first.push_back(cand[m].second);
    out.second.push_back(cand[m].first);
  }
  return out;
}

struct SmoothKnn {
  double rho = 0.0;
  double sigma = 1.0;
  bool fallback = false;
  std::vector<double> weights;
};

/// Finds sigma with sum_j exp(-max(0, d_j - rho) / sigma) = log2(k) by bisection.
inline SmoothKnn smooth_knn(const std::vector<double>& dists, int k) {
  SmoothKnn out;
  out.rho = dists.empty() ? 0.0 : *std::min_element(dists.begin(), dists.end());
  const double target = std::log2(static_cast<double>(k));
  auto psum = [&](double sigma) {
    double s = 0.0;
    for (double d : dists) s += std::exp(-std::max(0.0, d - out.rho) / sigma);
    return s;
  };
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double mid = 1.0;
  bool converged = false;
  for (int it = 0; it < 64; ++it) {
    const double s = psum(mid);
    if (std::abs(s - target) < 1e-5) {
      converged = true;
      break;
    }
    if (s > target) {
      hi = mid;
      mid = 0.5 * (lo + hi);
    } else {
      lo = mid;
      mid = std::isinf(hi) ? 2.0 * mid : 0.5 * (lo + hi);
    }
  }
  if (converged) {
    out.sigma = mid;
  } else {
    out.fallback = true;
    const double mean = dists.empty() ? 0.0 : std::accumulate(dists.begin(), dists.end(), 0.0) / dists.size();
    out.sigma = mean > 0.0 ? mean : 1.0;
  }
  for (double d : dists) out.weights.push_back(std::exp(-std::max(0.0, d - out.rho) / out.sigma));
  return out;
}

inline double clip4(double v) { return std::clamp(v, -4.0, 4.0); }

inline std::uint64_t hash_vector(const Eigen::VectorXd& v) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::uint64_t bits = 0;
    const double x = v[i] == 0.0 ? 0.0 : v[i];  // fold -0.0
    std::memcpy(&bits, &x, sizeof bits);
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (bits >> (8 * byte)) & 0xFFU;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace detail

/// Exact Euclidean kNN (self excluded), ties broken by lower index.
inline NeighborLists knn_graph(const Eigen::MatrixXd& points, int k) {
  const auto n = static_cast<int>(points.cols());
  if (k < 1 || k >= n)
    throw ConfigError("knn_graph needs 1 <= k < n, got k=" + std::to_string(k) + ", n=" + std::to_string(n));
  NeighborLists out;
  out.k = k;
  out.indices.resize(static_cast<std::size_t>(n));
  out.distances.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto [idx, dist] = detail::nearest(points, points.col(i), k, i);
    out.indices[static_cast<std::size_t>(i)] = std::move(idx);
    out.distances[static_cast<std::size_t>(i)] = std::move(dist);
  }
  return out;
}

/// Per-point bandwidths and the fuzzy union a + a' - a a' of the directed memberships.
inline FuzzyGraph fuzzy_weights(const NeighborLists& nb) {
  const auto n = static_cast<int>(nb.indices.size());
  FuzzyGraph g;
  g.n_points = n;
  std::map<std::pair<int, int>, std::pair<double, double>> pairs;  // (lo, hi) -> (a_lo->hi, a_hi->lo)
  for (int i = 0; i < n; ++i) {
    const auto sk = detail::smooth_knn(nb.distances[static_cast<std::size_t>(i)], nb.k);
    g.rho.push_back(sk.rho);
    g.sigma.push_back(sk.sigma);
    g.sigma_fallback.push_back(sk.fallback);
    const auto& idx = nb.indices[static_cast<std::size_t>(i)];
    for (std::size_t m = 0; m < idx.size(); ++m) {
      const int j = idx[m];
      auto& slot = pairs[{std::min(i, j), std::max(i, j)}];
      (i < j ? slot.first : slot.second) = sk.weights[m];
    }
    g.directed_weights.push_back(sk.weights);
  }
  for (const auto& [key, a] : pairs) {
    const double w = a.first + a.second - a.first * a.second;
    if (w > 0.0) g.edges.push_back({key.first, key.second, w});
  }
  return g;
}

/// Least-squares fit of 1 / (1 + a d^(2b)) to the piecewise target
/// (1 for d <= min_dist, exp(-(d - min_dist)) beyond) on 300 points of (0, 3].
inline std::pair<double, double> curve_params(double min_dist) {
  if (!(min_dist > 0.0)) throw RangeError("min_dist must be > 0");
  constexpr int kSamples = 300;
  std::vector<double> xs, ys;
  for (int i = 1; i <= kSamples; ++i) {
    const double d = 3.0 * i / kSamples;
    xs.push_back(d);
    ys.push_back(d <= min_dist ? 1.0 : std::exp(-(d - min_dist)));
  }
  auto sse = [&](double a, double b) {
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double r = 1.0 / (1.0 + a * std::pow(xs[i], 2.0 * b)) - ys[i];
      s += r * r;
    }
    return s;
  };
  // Levenberg-Marquardt in (log a, log b) keeps both parameters positive.
  Eigen::Vector2d p(std::log(1.5), std::log(0.9));
  double lambda = 1e-3;
  double cur = sse(std::exp(p[0]), std::exp(p[1]));
  for (int it = 0; it < 500; ++it) {
    const double a = std::exp(p[0]);
    const double b = std::exp(p[1]);
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double x2b = std::pow(xs[i], 2.0 * b);
      const double den = 1.0 + a * x2b;
      const double f = 1.0 / den;
      const double r = f - ys[i];
      // d f / d log a and d f / d log b
      const Eigen::Vector2d jac(-a * x2b / (den * den), -a * x2b * 2.0 * b * std::log(xs[i]) / (den * den));
      jtj += jac * jac.transpose();
      jtr += jac * r;
    }
    bool improved = false;
    for (int tries = 0; tries < 30 && !improved; ++tries) {
      Eigen::Matrix2d damped = jtj;
      damped.diagonal() *= (1.0 + lambda);
      const Eigen::Vector2d step = damped.ldlt().solve(-jtr);
      const Eigen::Vector2d next = p + step;
      const double val = sse(std::exp(next[0]), std::exp(next[1]));
      if (val < cur) {
        const double gain = cur - val;
        p = next;
        cur = val;
        lambda = std::max(lambda / 10.0, 1e-12);
        improved = true;
        if (gain < 1e-15 * std::max(1.0, cur)) return {std::exp(p[0]), std::exp(p[1])};
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  return {std::exp(p[0]), std::exp(p[1])};
}

namespace detail {

struct LayoutEdge {
  int head = 0;
  int tail = 0;
  double epochs_per_sample = 1.0;
};

/// SGD over attraction (sampled edges) and repulsion (negative samples).
/// Only `movable` heads are updated; tails move too when `move_tail` is set.
inline void optimize_layout(Eigen::Matrix2Xd& head_coords, const Eigen::Matrix2Xd* tail_coords,
                            const std::vector<LayoutEdge>& edges, int n_tail, int epochs, double a, double b,
                            double initial_alpha, int negative_samples, std::uint64_t seed) {
  const bool move_tail = tail_coords == nullptr;
  const auto tail_at = [&](int t) -> Eigen::Vector2d {
    return move_tail ? Eigen::Vector2d(head_coords.col(t)) : Eigen::Vector2d(tail_coords->col(t));
  };
  std::vector<double> next_sample(edges.size());
  std::vector<double> per_negative(edges.size());
  std::vector<double> next_negative(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    next_sample[e] = edges[e].epochs_per_sample;
    per_negative[e] = edges[e].epochs_per_sample / negative_samples;
    next_negative[e] = per_negative[e];
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n_tail - 1);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double alpha = initial_alpha * (1.0 - static_cast<double>(epoch) / epochs);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (next_sample[e] > epoch) continue;
      const int j = edges[e].head;
      const int k = edges[e].tail;
      Eigen::Vector2d other = tail_at(k);
      Eigen::Vector2d diff = head_coords.col(j) - other;
      double d2 = diff.squaredNorm();
      if (d2 > 0.0) {
        const double coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
        for (int d = 0; d < 2; ++d) {
          const double g = clip4(coeff * diff[d]);
          head_coords(d, j) += g * alpha;
          if (move_tail) head_coords(d, k) -= g * alpha;
        }
      }
      next_sample[e] += edges[e].epochs_per_sample;

      const int n_neg = static_cast<int>((epoch - next_negative[e]) / per_negative[e]);
      for (int p = 0; p < n_neg; ++p) {
        const int t = pick(rng);
        if (move_tail && t == j) continue;
        diff = head_coords.col(j) - tail_at(t);
        d2 = diff.squaredNorm();
        const double coeff = d2 > 0.0 ? 2.0 * b / ((0.001 + d2) * (a * std::pow(d2, b) + 1.0)) : 0.0;
        for (int d = 0; d < 2; ++d) {
          const double g = coeff > 0.0 ? clip4(coeff * diff[d]) : 4.0;
          head_coords(d, j) += g * alpha;
        }
      }
      next_negative[e] += n_neg * per_negative[e];
    }
  }
}

}  // namespace detail

/// Optimizes a planar layout for `graph`, starting from a seeded N(0, init_std^2) cloud.
inline PlanarEmbedding fit_embedding(const Eigen::MatrixXd& latents, const FuzzyGraph& graph,
                                     const EmbeddingParams& params) {
  const auto n = static_cast<int>(latents.cols());
  if (graph.n_points != n) throw ShapeError("graph and latent point counts differ");
  if (params.epochs < 1 || params.negative_samples < 1) throw ConfigError("epochs and negative_samples must be >= 1");
  PlanarEmbedding emb;
  emb.params = params;
  std::tie(emb.a, emb.b) = curve_params(params.min_dist);
  emb.latents = latents;
  emb.coords.resize(2, n);
  std::mt19937_64 init_rng(derive_seed(params.seed, 0));
  std::normal_distribution<double> normal(0.0, params.init_std);
  for (int i = 0; i < n; ++i) {
    emb.coords(0, i) = normal(init_rng);
    emb.coords(1, i) = normal(init_rng);
  }
  double max_w = 0.0;
  for (const auto& e : graph.edges) max_w = std::max(max_w, e.weight);
  std::vector<detail::LayoutEdge> edges;
  for (const auto& e : graph.edges) {
    if (e.weight < max_w / params.epochs) continue;
    const double eps = max_w / e.weight;
    edges.push_back({e.i, e.j, eps});
    edges.push_back({e.j, e.i, eps});
  }
  detail::optimize_layout(emb.coords, nullptr, edges, n, params.epochs, emb.a, emb.b, params.learning_rate,
                          params.negative_samples, derive_seed(params.seed, 1));
  return emb;
}

/// kNN graph, fuzzy weights and layout in one call.
inline PlanarEmbedding embed(const Eigen::MatrixXd& latents, const EmbeddingParams& params) {
  const auto n = static_cast<int>(latents.cols());
  if (n < 2) throw EmptyInputError("embedding needs at least two points");
  const int k = std::min(params.n_neighbors, n - 1);
  return fit_embedding(latents, fuzzy_weights(knn_graph(latents, k)), params);
}

/// Places new latents into a fitted layout. Each point starts at the membership-weighted
/// mean of its k nearest training points and is refined with training coordinates
/// frozen. Every point uses its own content-derived random stream, so results do not
/// depend on batch order.
inline Eigen::Matrix2Xd transform_new(const PlanarEmbedding& emb, const Eigen::MatrixXd& new_latents) {
  const int n_train = emb.size();
  if (n_train == 0) throw StateError("embedding has no training points");
  if (new_latents.rows() != emb.latents.rows())
    throw ShapeError("latent dimension " + std::to_string(new_latents.rows()) + " != embedding's " +
                     std::to_string(emb.latents.rows()));
  const int k = std::min(emb.params.n_neighbors, n_train);
  const int epochs = std::max(1, emb.params.epochs / 3);
  Eigen::Matrix2Xd out(2, new_latents.cols());
  for (Eigen::Index q = 0; q < new_latents.cols(); ++q) {
    const Eigen::VectorXd z = new_latents.col(q);
    const auto [idx, dist] = detail::nearest(emb.latents, z, k);
    const auto sk = detail::smooth_knn(dist, k);
    Eigen::Matrix2Xd pos(2, 1);
    pos.setZero();
    double wsum = 0.0;
    double max_w = 0.0;
    for (int m = 0; m < k; ++m) {
      pos.col(0) += sk.weights[m] * emb.coords.col(idx[m]);
      wsum += sk.weights[m];
      max_w = std::max(max_w, sk.weights[m]);
    }
    pos /= wsum;
    std::vector<detail::LayoutEdge> edges;
    for (int m = 0; m < k; ++m)
      if (sk.weights[m] >= max_w / epochs) edges.push_back({0, idx[m], max_w / sk.weights[m]});
    detail::optimize_layout(pos, &emb.coords, edges, n_train, epochs, emb.a, emb.b, emb.params.learning_rate / 4.0,
                            emb.params.negative_samples, derive_seed(emb.params.seed, detail::hash_vector(z)));
    out.col(q) = pos.col(0);
  }
  return out;
}

// Quality measures ----------------------------------------------------------

/// Trustworthiness of a low-dimensional layout w.r.t. the high-dimensional points.
inline double trustworthiness(const Eigen::MatrixXd& high, const Eigen::MatrixXd& low, int k) {
  const auto n = static_cast<int>(high.cols());
  if (low.cols() != n || k < 1 || 2 * k >= n) throw ConfigError("trustworthiness needs matching points and k < n/2");
  double penalty = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> hd;
    for (int j = 0; j < n; ++j)
      if (j != i) hd.emplace_back((high.col(j) - high.col(i)).squaredNorm(), j);
    std::sort(hd.begin(), hd.end());
    std::vector<int> rank(static_cast<std::size_t>(n), 0);
    for (std::size_t r = 0; r < hd.size(); ++r) rank[static_cast<std::size_t>(hd[r].second)] = static_cast<int>(r) + 1;
    const auto [low_nn, unused] = detail::nearest(low, low.col(i), k, i);
    for (int j : low_nn)
      if (rank[static_cast<std::size_t>(j)] > k) penalty += rank[static_cast<std::size_t>(j)] - k;
  }
  return 1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty;
}

/// Mean silhouette coefficient of labeled points (columns).
inline double silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
  const auto n = static_cast<int>(points.cols());
  if (static_cast<int>(labels.size()) != n) throw ShapeError("one label per point required");
  std::map<int, int> count;
  for (int l : labels) ++count[l];
  if (count.size() < 2) throw ConfigError("silhouette needs at least two clusters");
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    std::map<int, double> sum;
    for (int j = 0; j < n; ++j)
      if (j != i) sum[labels[j]] += (points.col(i) - points.col(j)).norm();
    const int own = labels[i];
    if (count[own] == 1) continue;  // contributes 0
    const double a = sum[own] / (count[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, s] : sum)
      if (l != own) b = std::min(b, s / count[l]);
    total += (b - a) / std::max(a, b);
  }
  return total / n;
}

// Persistence ---------------------------------------------------------------

inline nlohmann::json embedding_to_json(const PlanarEmbedding& emb) {
  nlohmann::json j;
  j["params"] = {{"n_neighbors", emb.params.n_neighbors},
                 {"min_dist", emb.params.min_dist},
                 {"epochs", emb.params.epochs},
                 {"negative_samples", emb.params.negative_samples},
                 {"learning_rate", emb.params.learning_rate},
                 {"init_std", emb.params.init_std},
                 {"seed", emb.params.seed}};
  j["a"] = emb.a;
  j["b"] = emb.b;
  nlohmann::json lat = nlohmann::json::array();
  nlohmann::json xy = nlohmann::json::array();
  for (Eigen::Index i = 0; i < emb.latents.cols(); ++i) {
    lat.push_back(std::vector<double>(emb.latents.col(i).data(), emb.latents.col(i).data() + emb.latents.rows()));
    xy.push_back({emb.coords(0, i), emb.coords(1, i)});
  }
  j["latents"] = lat;
  j["coords"] = xy;
  return j;
}

inline PlanarEmbedding embedding_from_json(const nlohmann::json& j) {
  try {
    PlanarEmbedding emb;
    const auto& p = j.at("params");
    emb.params.n_neighbors = p.at("n_neighbors").get<int>();
    emb.params.min_dist = p.at("min_dist").get<double>();
    emb.params.epochs = p.at("epochs").get<int>();
    emb.params.negative_samples = p.at("negative_samples").get<int>();
    emb.params.learning_rate = p.at("learning_rate").get<double>();
    emb.params.init_std = p.value("init_std", 1e-2);
    emb.params.seed = p.at("seed").get<std::uint64_t>();
    emb.a = j.at("a").get<double>();
    emb.b = j.at("b").get<double>();
    if (!(emb.a > 0.0 && emb.b > 0.0)) throw ValidationError("curve parameters must be positive");
    const auto& lat = j.at("latents");
    const auto& xy = j.at("coords");
    if (lat.size() != xy.size()) throw ValidationError("latent and coordinate counts differ");
    const auto n = static_cast<Eigen::Index>(lat.size());
    const auto dim = n > 0 ? static_cast<Eigen::Index>(lat[0].size()) : 0;
    emb.latents.resize(dim, n);
    emb.coords.resize(2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto z = lat[static_cast<std::size_t>(i)].get<std::vector<double>>();
      const auto c = xy[static_cast<std::size_t>(i)].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(z.size()) != dim || c.size() != 2)
        throw ValidationError("embedding point " + std::to_string(i) + " has wrong dimensions");
      emb.latents.col(i) = Eigen::Map<const Eigen::VectorXd>(z.data(), dim);
      emb.coords.col(i) = Eigen::Vector2d(c[0], c[1]);
    }
    return emb;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed embedding document: ") + e.what());
  }
}

}  // namespace tltrack
