#pragma once

// Per-head metrics (MAE in days, percent agreement) and the unseen-class protocol:
// fit an N-component mixture to embedded test points, label each component with the
// majority variety it contains, and score per-point agreement.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tltrack/errors.hpp"
#include "tltrack/feature_store.hpp"
#include "tltrack/gaussian_mixture.hpp"
#include "tltrack/pretext_model.hpp"

namespace tltrack {

struct MaeDays {
  double mean = 0.0;
  double std = 0.0;  // population std of the absolute errors
};

inline MaeDays mae_days(const std::vector<double>& pred_norm, const std::vector<double>& label_norm, double span_days) {
  if (pred_norm.empty()) throw EmptyInputError("mae_days: empty input");
  if (pred_norm.size() != label_norm.size()) throw ShapeError("mae_days: length mismatch");
  const double n = static_cast<double>(pred_norm.size());
  std::vector<double> err(pred_norm.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    err[i] = std::abs(pred_norm[i] - label_norm[i]) * span_days;
    sum += err[i];
  }
  MaeDays out{sum / n, 0.0};
  double var = 0.0;
  for (double e : err) var += (e - out.mean) * (e - out.mean);
  out.std = std::sqrt(var / n);
  return out;
}

template <typename T>
double percent_agreement(const std::vector<T>& pred, const std::vector<T>& truth) {
  if (pred.empty()) throw EmptyInputError("percent_agreement: empty input");
  if (pred.size() != truth.size()) throw ShapeError("percent_agreement: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

struct EvalReport {
  std::string backbone;
  std::string heads;
  std::size_t count = 0;
  std::optional<MaeDays> time_mae;
  std::optional<double> variety_pa;
  std::optional<double> fungicide_pa;
  std::optional<double> rot_pa;
  std::size_t rot_count = 0;
  std::optional<double> unseen_pa;
  int unseen_components = 0;
};

/// Runs predict on every record of `test` and aggregates per enabled head.
/// Rot is scored on rot-labelled records only.
inline EvalReport eval_heads(const PretextModel& model, const FeatureSet& test) {
  if (test.empty()) throw EmptyInputError("evaluation set is empty");
  if (static_cast<int>(test.feature_dim) != model.input_dim)
    throw ShapeError("feature_dim " + std::to_string(test.feature_dim) + " != model input_dim " +
                     std::to_string(model.input_dim));
  EvalReport rep;
  rep.backbone = test.backbone;
  rep.heads = to_string(model.heads);
  rep.count = test.size();

  const auto fw = forward_batch(model, feature_matrix(test));
  std::vector<double> t_pred, t_true;
  std::vector<int> v_pred, v_true;
  std::vector<bool> f_pred, f_true, r_pred, r_true;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& rec = test.records[i];
    const auto col = static_cast<Eigen::Index>(i);
    HeadOutputs out;
    if (model.time_head) out.time = fw.time[col];
    if (model.variety_head) out.variety = fw.variety.col(col);
    if (model.fungicide_head) out.fungicide = fw.fungicide[col];
    if (model.rot_head) out.rot = fw.rot[col];
    const auto p = predictions_from(out, test.span_days);
    if (p.time_days) {
      t_pred.push_back(*p.time_days / test.span_days);
      t_true.push_back(rec.time_norm);
    }
    if (p.variety) {
      v_pred.push_back(*p.variety);
      v_true.push_back(rec.variety_id);
    }
    if (p.fungicide) {
      f_pred.push_back(*p.fungicide);
      f_true.push_back(rec.fungicide);
    }
    if (p.rot && rec.rot) {
      r_pred.push_back(*p.rot);
      r_true.push_back(*rec.rot);
    }
  }
  if (model.heads.time) rep.time_mae = mae_days(t_pred, t_true, test.span_days);
  if (model.heads.variety) rep.variety_pa = percent_agreement(v_pred, v_true);
  if (model.heads.fungicide) rep.fungicide_pa = percent_agreement(f_pred, f_true);
  if (model.heads.rot) {
    if (r_pred.empty()) throw ConfigError("rot head requested but the evaluation set has no rot labels");
    rep.rot_pa = percent_agreement(r_pred, r_true);
    rep.rot_count = r_pred.size();
  }
  return rep;
}

struct UnseenClassResult {
  double percent = 0.0;
  std::vector<int> assignment;       // component per point
  std::map<int, int> component_label;  // component -> majority variety
};

/// Unseen-class agreement: N-component mixture on the planar points, majority variety
/// per component (ties to the lower id), percent agreement per point.
inline UnseenClassResult eval_unseen_classes(const std::vector<Eigen::Vector2d>& points,
                                             const std::vector<int>& varieties, int n_components, std::uint64_t seed,
                                             const MixtureFitOptions& opts = {}) {
  if (points.size() != varieties.size()) throw ShapeError("one variety label per point required");
  if (points.empty()) throw EmptyInputError("no points to evaluate");
  if (n_components < 1 || n_components > static_cast<int>(points.size()))
    throw ConfigError("component count " + std::to_string(n_components) + " exceeds point count " +
                      std::to_string(points.size()));
  const auto gmm = fit_mixture<2>(points, n_components, seed, opts);
  UnseenClassResult out;
  std::map<int, std::map<int, int>> tally;
  for (const auto& p : points) out.assignment.push_back(most_responsible(gmm, p));
  for (std::size_t i = 0; i < points.size(); ++i) ++tally[out.assignment[i]][varieties[i]];
  for (const auto& [comp, counts] : tally) {
    int best = counts.begin()->first;
    for (const auto& [variety, c] : counts)
      if (c > counts.at(best)) best = variety;  // map order gives lowest id on ties
    out.component_label[comp] = best;
  }
  std::vector<int> pred;
  for (int a : out.assignment) pred.push_back(out.component_label.at(a));
  out.percent = percent_agreement(pred, varieties);
  return out;
}

// Export --------------------------------------------------------------------

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["backbone"] = r.backbone;
  j["heads"] = r.heads;
  j["count"] = r.count;
  if (r.time_mae) j["time_mae_days"] = {{"mean", r.time_mae->mean}, {"std", r.time_mae->std}};
  if (r.variety_pa) j["class_pa"] = *r.variety_pa;
  if (r.fungicide_pa) j["fungicide_pa"] = *r.fungicide_pa;
  if (r.rot_pa) {
    j["rot_pa"] = *r.rot_pa;
    j["rot_count"] = r.rot_count;
  }
  if (r.unseen_pa) {
    j["unseen_class_pa"] = *r.unseen_pa;
    j["unseen_components"] = r.unseen_components;
  }
  return j;
}

/// Aligned plain-text table: [Backbone] | Time MAE(d) | Class PA[%] | Fungicide PA[%] | Rot PA[%].
inline std::string report_table(const EvalReport& r, bool with_backbone = true) {
  auto fixed = [](double v, int prec) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
  };
  std::vector<std::pair<std::string, std::string>> cols;
  if (with_backbone) cols.emplace_back("Backbone", r.backbone.empty() ? "-" : r.backbone);
  cols.emplace_back("Time MAE(d)", r.time_mae ? fixed(r.time_mae->mean, 2) + " +/- " + fixed(r.time_mae->std, 2) : "-");
  cols.emplace_back("Class PA[%]", r.variety_pa ? fixed(*r.variety_pa, 1) + "%" : "-");
  cols.emplace_back("Fungicide PA[%]", r.fungicide_pa ? fixed(*r.fungicide_pa, 1) + "%" : "-");
  cols.emplace_back("Rot PA[%]", r.rot_pa ? fixed(*r.rot_pa, 1) + "%" : "-");
  if (r.unseen_pa) cols.emplace_back("Class PA*[%]", fixed(*r.unseen_pa, 1) + "%");
  std::ostringstream head, rule, row;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto width = static_cast<int>(std::max(cols[c].first.size(), cols[c].second.size()));
    const char* sep = c == 0 ? "" : "  ";
    head << sep << std::left << std::setw(width) << cols[c].first;
    rule << sep << std::string(static_cast<std::size_t>(width), '-');
    row << sep << std::left << std::setw(width) << cols[c].second;
  }
  return head.str() + "\n" + rule.str() + "\n" + row.str() + "\n";
}

}  // namespace tltrack
