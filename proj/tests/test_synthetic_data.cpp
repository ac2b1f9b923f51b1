#include <gtest/gtest.h>

#include <set>

#include "tltrack/tltrack.hpp"

using namespace tltrack;

namespace {

SynthConfig small() {
  SynthConfig cfg;
  cfg.n_classes = 2;
  cfg.tracks_per_class = 3;
  cfg.n_sessions = 10;
  cfg.feature_dim = 16;
  return cfg;
}

}  // namespace

TEST(Synthetic, CountsAndLabels) {
  const auto d = gen_synthetic(small(), 1);
  EXPECT_EQ(d.set.size(), 60U);
  EXPECT_EQ(d.tracks.size(), 6U);
  EXPECT_NO_THROW(validate(d.set));
  std::set<std::uint32_t> ids;
  for (const auto& r : d.set.records) ids.insert(r.track_id);
  EXPECT_EQ(ids.size(), 6U);
  EXPECT_EQ(d.set.class_names.size(), 2U);
  for (const auto& r : d.set.records) EXPECT_EQ(r.time_norm, static_cast<float>(r.session_index / 9.0));
  EXPECT_EQ(d.set.records[0].time_norm, 0.0F);
  EXPECT_EQ(d.set.records[9].time_norm, 1.0F);
}

TEST(Synthetic, NoiselessFeaturesPreserveDistances) {
  auto cfg = small();
  cfg.noise_std = 0.0;
  const auto d = gen_synthetic(cfg, 3);
  EXPECT_LT((d.lift.transpose() * d.lift - Eigen::Matrix2d::Identity()).norm(), 1e-12);
  std::vector<Eigen::Vector2d> truth;
  for (const auto& t : d.tracks) truth.insert(truth.end(), t.begin(), t.end());
  ASSERT_EQ(truth.size(), d.set.size());
  for (std::size_t i = 0; i < truth.size(); i += 7)
    for (std::size_t j = i + 1; j < truth.size(); j += 5) {
      const auto& a = d.set.records[i].features;
      const auto& b = d.set.records[j].features;
      double f = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) f += (a[k] - b[k]) * (a[k] - b[k]);
      EXPECT_NEAR(std::sqrt(f), (truth[i] - truth[j]).norm(), 1e-5);
    }
  // Features span exactly the two lift directions.
  Eigen::MatrixXd x(16, static_cast<Eigen::Index>(d.set.size()));
  for (std::size_t i = 0; i < d.set.size(); ++i)
    for (int k = 0; k < 16; ++k) x(k, static_cast<Eigen::Index>(i)) = d.set.records[i].features[static_cast<std::size_t>(k)];
  const Eigen::MatrixXd residual = x - d.lift * (d.lift.transpose() * x);
  EXPECT_LT(residual.cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Synthetic, ClassesOccupySeparateSectors) {
  auto cfg = small();
  cfg.n_classes = 4;
  const auto d = gen_synthetic(cfg, 4);
  for (std::size_t t = 0; t < d.tracks.size(); ++t) {
    const int cls = static_cast<int>(t) / cfg.tracks_per_class;
    for (const auto& p : d.tracks[t]) EXPECT_GT(p.dot(class_outward(cfg, cls)), 0.9) << t;
  }
}

TEST(Synthetic, Deterministic) {
  EXPECT_EQ(gen_synthetic(small(), 8).set, gen_synthetic(small(), 8).set);
  EXPECT_NE(gen_synthetic(small(), 8).set, gen_synthetic(small(), 9).set);
}

TEST(Synthetic, TreatmentAndRotLabels) {
  auto cfg = small();
  cfg.tracks_per_class = 4;
  cfg.scale = Scale::Berry;
  cfg.rot_fraction = 0.5;
  const auto d = gen_synthetic(cfg, 2);
  int treated = 0, rotting = 0;
  for (const auto& r : d.set.records) {
    treated += r.fungicide;
    ASSERT_TRUE(r.rot.has_value());
    rotting += *r.rot;
  }
  EXPECT_EQ(treated, 2 * 2 * 10);
  // Two rotting tracks per class, labelled for sessions with t/9 >= 0.5.
  EXPECT_EQ(rotting, 2 * 2 * 5);
  EXPECT_NO_THROW(validate(d.set));
}

TEST(Synthetic, RejectsBadConfig) {
  auto cfg = small();
  cfg.n_sessions = 2;
  EXPECT_THROW(gen_synthetic(cfg, 1), ConfigError);
  cfg = small();
  cfg.feature_dim = 4;
  EXPECT_THROW(gen_synthetic(cfg, 1), ConfigError);
  cfg = small();
  cfg.rot_fraction = 0.5;  // patch scale
  EXPECT_THROW(gen_synthetic(cfg, 1), ConfigError);
}
