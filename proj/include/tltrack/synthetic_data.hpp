#pragma once

// Synthetic time-lapse feature sets with known planar ground truth. Each class follows
// its own 2D curve (line, arc or S-curve) in its own angular sector; tracks are small
// offsets of the class curve; the 2D points are lifted to feature_dim dimensions by a
// seeded matrix with orthonormal columns and perturbed with isotropic noise.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tltrack/errors.hpp"
#include "tltrack/feature_store.hpp"
#include "tltrack/random.hpp"

namespace tltrack {

enum class CurveFamily { Line, Arc, SCurve };

struct SynthConfig {
  int n_classes = 4;
  int tracks_per_class = 8;
  int n_sessions = 40;
  int feature_dim = 64;
  double noise_std = 0.05;
  double span_days = 108.0;
  double fungicide_fraction = 0.5;
  double rot_fraction = 0.0;  // berry scale only
  Scale scale = Scale::Patch;
  double inner_radius = 1.0;
  double radial_length = 2.0;
  double side_amplitude = 0.4;
  double track_offset_std = 0.05;
  double fungicide_shift = 0.2;
  double rot_shift = 0.25;
  std::vector<CurveFamily> families;  // per class; empty cycles Line, Arc, SCurve
};

struct SyntheticData {
  FeatureSet set;
  std::vector<std::vector<Eigen::Vector2d>> tracks;  // ground truth per track, one point per session
  Eigen::MatrixXd lift;                              // feature_dim x 2, orthonormal columns
};

inline CurveFamily family_of(const SynthConfig& cfg, int cls) {
  if (!cfg.families.empty()) return cfg.families[static_cast<std::size_t>(cls) % cfg.families.size()];
  static constexpr CurveFamily kCycle[] = {CurveFamily::Line, CurveFamily::Arc, CurveFamily::SCurve};
  return kCycle[cls % 3];
}

inline Eigen::Vector2d class_outward(const SynthConfig& cfg, int cls) {
  const double angle = 2.0 * std::numbers::pi * cls / cfg.n_classes;
  return {std::cos(angle), std::sin(angle)};
}

inline Eigen::Vector2d class_sideways(const SynthConfig& cfg, int cls) {
  const Eigen::Vector2d out = class_outward(cfg, cls);
  return {-out.y(), out.x()};
}

/// Class curve at season fraction s in [0, 1]. Class c runs radially outward along
/// angle 2*pi*c/n_classes from inner_radius to inner_radius + radial_length; the family
/// sets the sideways profile. Angular sectors keep classes from intersecting.
inline Eigen::Vector2d class_curve(const SynthConfig& cfg, int cls, double s) {
  const double shape = cfg.side_amplitude * (1.0 - 0.1 * (cls / 3));  // class-specific amplitude
  double side = 0.0;
  switch (family_of(cfg, cls)) {
    case CurveFamily::Line: side = 0.75 * shape * (s - 0.5); break;
    case CurveFamily::Arc: side = shape * std::sin(std::numbers::pi * s); break;
    case CurveFamily::SCurve: side = 0.75 * shape * std::sin(2.0 * std::numbers::pi * s); break;
  }
  return (cfg.inner_radius + cfg.radial_length * s) * class_outward(cfg, cls) + side * class_sideways(cfg, cls);
}

inline void validate(const SynthConfig& cfg) {
  if (cfg.n_classes < 1) throw ConfigError("n_classes must be >= 1");
  if (cfg.tracks_per_class < 1) throw ConfigError("tracks_per_class must be >= 1");
  if (cfg.n_sessions < 3) throw ConfigError("n_sessions must be >= 3, got " + std::to_string(cfg.n_sessions));
  if (cfg.n_sessions > 65536) throw ConfigError("n_sessions exceeds the 16-bit session index");
  if (cfg.feature_dim < 8) throw ConfigError("feature_dim must be >= 8, got " + std::to_string(cfg.feature_dim));
  if (!(cfg.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(cfg.span_days > 0.0)) throw ConfigError("span_days must be > 0");
  if (cfg.fungicide_fraction < 0.0 || cfg.fungicide_fraction > 1.0) throw ConfigError("fungicide_fraction outside [0,1]");
  if (cfg.rot_fraction < 0.0 || cfg.rot_fraction > 1.0) throw ConfigError("rot_fraction outside [0,1]");
  if (cfg.rot_fraction > 0.0 && cfg.scale != Scale::Berry) throw ConfigError("rot labels require berry scale");
}

inline SyntheticData gen_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  SyntheticData out;
  const int n = cfg.feature_dim;

  std::mt19937_64 lift_rng(derive_seed(seed, 0));
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g(n, 2);
  for (int c = 0; c < 2; ++c)
    for (int r = 0; r < n; ++r) g(r, c) = normal(lift_rng);
  out.lift = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() * Eigen::MatrixXd::Identity(n, 2);

  auto& set = out.set;
  set.feature_dim = static_cast<std::uint32_t>(n);
  set.span_days = cfg.span_days;
  set.backbone = "synthetic";
  set.scale = cfg.scale;
  for (int c = 0; c < cfg.n_classes; ++c) set.class_names.push_back(std::string(1, static_cast<char>('A' + c % 26)) +
                                                                   (c >= 26 ? std::to_string(c / 26) : ""));

  std::mt19937_64 track_rng(derive_seed(seed, 1));
  std::mt19937_64 noise_rng(derive_seed(seed, 2));
  std::normal_distribution<double> offset;
  std::normal_distribution<double> noise;
  const int n_treated = static_cast<int>(std::lround(cfg.fungicide_fraction * cfg.tracks_per_class));
  const int n_rotting = static_cast<int>(std::lround(cfg.rot_fraction * cfg.tracks_per_class));
  const double t_last = cfg.n_sessions - 1;

  std::uint32_t track_id = 0;
  for (int c = 0; c < cfg.n_classes; ++c) {
    for (int j = 0; j < cfg.tracks_per_class; ++j, ++track_id) {
      const bool treated = j < n_treated;
      // The last n_rotting tracks of each class rot from mid-season on.
      const bool rotting = cfg.scale == Scale::Berry && j >= cfg.tracks_per_class - n_rotting;
      Eigen::Vector2d track_offset(offset(track_rng), offset(track_rng));
      track_offset *= cfg.track_offset_std;
      std::vector<Eigen::Vector2d> truth;
      for (int t = 0; t < cfg.n_sessions; ++t) {
        const double s = t / t_last;
        Eigen::Vector2d p = class_curve(cfg, c, s) + track_offset;
        // Treatment and rot move the curve sideways in its own class frame, by the same amount for every
        // class. A single global offset would have a radial part for some classes and alias season time.
        if (treated) p += cfg.fungicide_shift * class_sideways(cfg, c);
        const bool rot_now = rotting && s >= 0.5;
        if (rot_now) p -= cfg.rot_shift * (s - 0.5) * 2.0 * class_sideways(cfg, c);
        truth.push_back(p);

        FeatureRecord r;
        r.track_id = track_id;
        r.session_index = static_cast<std::uint16_t>(t);
        r.time_norm = static_cast<float>(t / t_last);
        r.variety_id = static_cast<std::uint16_t>(c);
        r.fungicide = treated;
        if (cfg.scale == Scale::Berry) r.rot = rot_now;
        r.spatial_tag = SpatialTag::None;
        const Eigen::VectorXd f = out.lift * p;
        r.features.resize(static_cast<std::size_t>(n));
        for (int d = 0; d < n; ++d) r.features[static_cast<std::size_t>(d)] = static_cast<float>(f[d] + cfg.noise_std * noise(noise_rng));
        set.records.push_back(std::move(r));
      }
      out.tracks.push_back(std::move(truth));
    }
  }
  return out;
}

}  // namespace tltrack
