#pragma once

// Velocity field over the planar embedding: per-track displacement samples, a
// Gaussian mixture over stacked [position velocity] vectors, conditioning at a
// position, and iterated rollouts.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tltrack/errors.hpp"
#include "tltrack/gaussian_mixture.hpp"

namespace tltrack {

using Point2 = Eigen::Vector2d;
using Stacked = Eigen::Vector4d;

struct TrackPoint {
  int session_index = 0;
  Point2 position = Point2::Zero();
};

struct Track {
  std::uint32_t track_id = 0;
  std::vector<TrackPoint> points;  // strictly increasing session_index
  int variety_id = 0;
  bool fungicide = false;
};

struct PVSample {
  Point2 position = Point2::Zero();
  Point2 velocity = Point2::Zero();
  std::uint32_t track_id = 0;
  int session_index = 0;

  Stacked stacked() const { return (Stacked() << position, velocity).finished(); }
};

using TrajectoryModel = GaussianMixture<4>;
using ConditionalVelocity = ConditionalMixture<2>;

struct TrajectoryFitOptions {
  int components = 8;
  MixtureFitOptions mixture;
};

/// Displacements v_t = x_{t+eps} - x_t paired with x_t, for t = 0 .. T-eps-1 (point indices).
inline std::vector<PVSample> compute_velocities(const Track& track, int eps) {
  if (eps < 1) throw ConfigError("eps must be >= 1");
  const int t_len = static_cast<int>(track.points.size());
  for (int i = 1; i < t_len; ++i)
    if (track.points[i].session_index <= track.points[i - 1].session_index)
      throw ValidationError("track " + std::to_string(track.track_id) + " is not strictly increasing in time");
  if (t_len <= eps)
    throw InsufficientLengthError("track " + std::to_string(track.track_id) + " has " + std::to_string(t_len) +
                                  " points, needs more than eps=" + std::to_string(eps));
  std::vector<PVSample> out;
  out.reserve(static_cast<std::size_t>(t_len - eps));
  for (int t = 0; t + eps < t_len; ++t)
    out.push_back({track.points[t].position, track.points[t + eps].position - track.points[t].position,
                   track.track_id, track.points[t].session_index});
  return out;
}

inline TrajectoryModel fit_trajectory_model(const std::vector<PVSample>& samples, int components, std::uint64_t seed,
                                            const MixtureFitOptions& opts = {}) {
  std::vector<Stacked> stacked;
  stacked.reserve(samples.size());
  for (const auto& s : samples) stacked.push_back(s.stacked());
  return fit_mixture<4>(stacked, components, seed, opts);
}

/// P(V | X = x0) as a two-dimensional mixture.
inline ConditionalVelocity condition_velocity(const TrajectoryModel& gmm, const Point2& x0) {
  return condition<2>(gmm, x0);
}

enum class RolloutMode { Mean, Sample };
enum class RolloutStatus { Complete, OutOfSupport };

struct Rollout {
  std::vector<Point2> points;  // x0 first
  RolloutStatus status = RolloutStatus::Complete;
  std::string message;
};

/// Repeatedly conditions at the current position and advances by the conditional
/// mean velocity (or a seeded draw). Each step spans eps sessions. Leaving the
/// mixture's support truncates the path and reports OutOfSupport.
inline Rollout rollout(const TrajectoryModel& gmm, const Point2& x0, int steps, RolloutMode mode,
                       std::uint64_t seed = 0) {
  if (steps < 1) throw ConfigError("rollout needs steps >= 1");
  Rollout out;
  out.points.push_back(x0);
  std::mt19937_64 rng(seed);
  Point2 x = x0;
  for (int s = 0; s < steps; ++s) {
    try {
      const auto cond = condition_velocity(gmm, x);
      x += mode == RolloutMode::Mean ? cond.mean() : cond.sample(rng);
    } catch (const OutOfSupportError& e) {
      out.status = RolloutStatus::OutOfSupport;
      out.message = "step " + std::to_string(s) + ": " + e.what();
      break;
    }
    out.points.push_back(x);
  }
  return out;
}

/// Steps needed to cover a season of `sessions` imaging sessions: ceil((T-1)/eps).
inline int default_rollout_steps(int sessions, int eps) {
  if (sessions < 2 || eps < 1) throw ConfigError("need sessions >= 2 and eps >= 1");
  return (sessions - 1 + eps - 1) / eps;
}

using GroupKey = std::pair<int, bool>;  // (variety, fungicide)

struct GroupedFit {
  std::map<GroupKey, TrajectoryModel> models;
  std::vector<std::string> warnings;  // skipped tracks / groups
};

/// One mixture per (variety, fungicide) group, or a single pooled mixture keyed (-1, false).
inline GroupedFit fit_grouped(const std::vector<Track>& tracks, int eps, int components, std::uint64_t seed,
                              bool pooled, const MixtureFitOptions& opts = {}) {
  std::map<GroupKey, std::vector<PVSample>> groups;
  GroupedFit out;
  for (const auto& t : tracks) {
    try {
      auto v = compute_velocities(t, eps);
      auto& dst = groups[pooled ? GroupKey{-1, false} : GroupKey{t.variety_id, t.fungicide}];
      dst.insert(dst.end(), v.begin(), v.end());
    } catch (const InsufficientLengthError& e) {
      out.warnings.emplace_back(e.what());
    }
  }
  for (auto& [key, samples] : groups) {
    if (static_cast<int>(samples.size()) < components) {
      out.warnings.push_back("group variety=" + std::to_string(key.first) + " fungicide=" +
                             std::to_string(key.second) + " has " + std::to_string(samples.size()) +
                             " samples, fewer than K=" + std::to_string(components) + "; skipped");
      continue;
    }
    out.models.emplace(key, fit_trajectory_model(samples, components, seed, opts));
  }
  return out;
}

}  // namespace tltrack
