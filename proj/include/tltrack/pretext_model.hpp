#pragma once

// Shared encoder (n -> n/2 -> n/4, ReLU) with one linear head per pretext task.
// The time head is linear and trained with MSE; variety, fungicide and rot heads are
// per-unit sigmoids trained with BCE. The training objective is the plain sum of the
// enabled head losses.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tltrack/errors.hpp"
#include "tltrack/feature_store.hpp"
#include "tltrack/nn_core.hpp"
#include "tltrack/random.hpp"

namespace tltrack {

struct HeadConfig {
  bool time = false;
  bool variety = false;
  int n_classes = 0;
  bool fungicide = false;
  bool rot = false;

  bool any() const noexcept { return time || variety || fungicide || rot; }
  bool operator==(const HeadConfig&) const = default;
};

/// Parses a comma-separated head list such as "time,variety,fungicide".
inline HeadConfig parse_heads(const std::string& list, int n_classes) {
  HeadConfig cfg;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "time") cfg.time = true;
    else if (item == "variety" || item == "class") cfg.variety = true;
    else if (item == "fungicide") cfg.fungicide = true;
    else if (item == "rot") cfg.rot = true;
    else if (!item.empty()) throw ConfigError("unknown head '" + item + "'");
  }
  if (cfg.variety) cfg.n_classes = n_classes;
  return cfg;
}

inline std::string to_string(const HeadConfig& cfg) {
  std::string out;
  auto add = [&out](const char* name) { out += (out.empty() ? "" : ",") + std::string(name); };
  if (cfg.time) add("time");
  if (cfg.variety) add("variety");
  if (cfg.fungicide) add("fungicide");
  if (cfg.rot) add("rot");
  return out;
}

struct PretextModel {
  int input_dim = 0;
  HeadConfig heads;
  nn::DenseLayer encoder1;
  nn::DenseLayer encoder2;
  std::optional<nn::DenseLayer> time_head;
  std::optional<nn::DenseLayer> variety_head;
  std::optional<nn::DenseLayer> fungicide_head;
  std::optional<nn::DenseLayer> rot_head;

  int latent_dim() const { return static_cast<int>(encoder2.out_dim()); }
};

struct TrainConfig {
  double learning_rate = 0.005;
  int epochs = 8;
  int batch_size = 64;
  std::uint64_t seed = 0;
};

namespace detail {

/// Layers in canonical order (encoder1, encoder2, time, variety, fungicide, rot), skipping absent heads.
template <typename Model, typename Fn>
void for_each_layer(Model& model, Fn&& fn) {
  fn("encoder1", model.encoder1);
  fn("encoder2", model.encoder2);
  if (model.time_head) fn("time_head", *model.time_head);
  if (model.variety_head) fn("variety_head", *model.variety_head);
  if (model.fungicide_head) fn("fungicide_head", *model.fungicide_head);
  if (model.rot_head) fn("rot_head", *model.rot_head);
}

}  // namespace detail

inline PretextModel build_model(int input_dim, const HeadConfig& heads, std::uint64_t seed) {
  if (input_dim < 4) throw ConfigError("input_dim must be >= 4, got " + std::to_string(input_dim));
  if (!heads.any()) throw ConfigError("at least one prediction head must be enabled");
  if (heads.variety && heads.n_classes < 1) throw ConfigError("variety head needs n_classes >= 1");
  PretextModel m;
  m.input_dim = input_dim;
  m.heads = heads;
  if (!heads.variety) m.heads.n_classes = 0;
  const int hidden = input_dim / 2;
  const int latent = input_dim / 4;
  m.encoder1 = nn::he_init(hidden, input_dim, derive_seed(seed, 0));
  m.encoder2 = nn::he_init(latent, hidden, derive_seed(seed, 1));
  if (heads.time) m.time_head = nn::he_init(1, latent, derive_seed(seed, 2));
  if (heads.variety) m.variety_head = nn::he_init(heads.n_classes, latent, derive_seed(seed, 3));
  if (heads.fungicide) m.fungicide_head = nn::he_init(1, latent, derive_seed(seed, 4));
  if (heads.rot) m.rot_head = nn::he_init(1, latent, derive_seed(seed, 5));
  return m;
}

inline Eigen::Index parameter_count(const PretextModel& model) {
  Eigen::Index n = 0;
  detail::for_each_layer(model, [&n](const char*, const nn::DenseLayer& l) { n += l.parameter_count(); });
  return n;
}

/// Flattened parameters: per layer, weights in column-major order followed by bias.
inline nn::Vector flatten_parameters(const PretextModel& model) {
  nn::Vector out(parameter_count(model));
  Eigen::Index at = 0;
  detail::for_each_layer(model, [&](const char*, const nn::DenseLayer& l) {
    out.segment(at, l.weights.size()) = l.weights.reshaped();
    at += l.weights.size();
    out.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  });
  return out;
}

inline void assign_parameters(PretextModel& model, const nn::Vector& params) {
  if (params.size() != parameter_count(model)) throw ShapeError("parameter vector has wrong length");
  Eigen::Index at = 0;
  detail::for_each_layer(model, [&](const char*, nn::DenseLayer& l) {
    l.weights.reshaped() = params.segment(at, l.weights.size());
    at += l.weights.size();
    l.bias = params.segment(at, l.bias.size());
    at += l.bias.size();
  });
}

/// Human-readable name of a flattened parameter index, e.g. "encoder1.weights[3,7]".
inline std::string parameter_name(const PretextModel& model, Eigen::Index index) {
  std::string out = "parameter " + std::to_string(index);
  Eigen::Index at = 0;
  detail::for_each_layer(model, [&](const char* name, const nn::DenseLayer& l) {
    if (index >= at && index < at + l.weights.size()) {
      const Eigen::Index k = index - at;
      out = std::string(name) + ".weights[" + std::to_string(k % l.weights.rows()) + "," +
            std::to_string(k / l.weights.rows()) + "]";
    } else if (index >= at + l.weights.size() && index < at + l.parameter_count()) {
      out = std::string(name) + ".bias[" + std::to_string(index - at - l.weights.size()) + "]";
    }
    at += l.parameter_count();
  });
  return out;
}

/// Activations for a batch (one sample per column), kept for the backward pass.
struct BatchForward {
  nn::Matrix input;
  nn::Matrix pre1, pre2;  // encoder pre-activations
  nn::Matrix hidden;      // ReLU(pre1)
  nn::Matrix latent;      // ReLU(pre2)
  nn::Vector time;        // linear output per sample
  nn::Matrix variety;     // n_classes x B, sigmoid
  nn::Vector fungicide;   // sigmoid
  nn::Vector rot;         // sigmoid
};

inline BatchForward forward_batch(const PretextModel& model, const nn::Matrix& inputs) {
  if (inputs.rows() != model.input_dim)
    throw ShapeError("feature length " + std::to_string(inputs.rows()) + " != model input_dim " +
                     std::to_string(model.input_dim));
  BatchForward fw;
  fw.input = inputs;
  fw.pre1 = nn::dense_forward(model.encoder1, inputs);
  fw.hidden = nn::relu(fw.pre1);
  fw.pre2 = nn::dense_forward(model.encoder2, fw.hidden);
  fw.latent = nn::relu(fw.pre2);
  if (model.time_head) fw.time = nn::dense_forward(*model.time_head, fw.latent).row(0).transpose();
  if (model.variety_head) fw.variety = nn::sigmoid(nn::dense_forward(*model.variety_head, fw.latent));
  if (model.fungicide_head)
    fw.fungicide = nn::sigmoid(nn::dense_forward(*model.fungicide_head, fw.latent)).row(0).transpose();
  if (model.rot_head) fw.rot = nn::sigmoid(nn::dense_forward(*model.rot_head, fw.latent)).row(0).transpose();
  return fw;
}

struct HeadOutputs {
  nn::Vector z;
  std::optional<double> time;
  std::optional<nn::Vector> variety;
  std::optional<double> fungicide;
  std::optional<double> rot;
};

inline HeadOutputs forward(const PretextModel& model, const nn::Vector& f) {
  if (f.size() != model.input_dim)
    throw ShapeError("feature length " + std::to_string(f.size()) + " != model input_dim " +
                     std::to_string(model.input_dim));
  const auto fw = forward_batch(model, f);
  HeadOutputs out;
  out.z = fw.latent.col(0);
  if (model.time_head) out.time = fw.time[0];
  if (model.variety_head) out.variety = fw.variety.col(0);
  if (model.fungicide_head) out.fungicide = fw.fungicide[0];
  if (model.rot_head) out.rot = fw.rot[0];
  return out;
}

inline nn::Vector encode(const PretextModel& model, const nn::Vector& f) {
  if (f.size() != model.input_dim)
    throw ShapeError("feature length " + std::to_string(f.size()) + " != model input_dim " +
                     std::to_string(model.input_dim));
  return nn::relu(nn::dense_forward(model.encoder2, nn::relu(nn::dense_forward(model.encoder1, f))));
}

/// Columns of the result follow the column order of `inputs`.
inline nn::Matrix encode_batch(const PretextModel& model, const nn::Matrix& inputs) {
  if (inputs.rows() != model.input_dim)
    throw ShapeError("feature length " + std::to_string(inputs.rows()) + " != model input_dim " +
                     std::to_string(model.input_dim));
  return nn::relu(nn::dense_forward(model.encoder2, nn::relu(nn::dense_forward(model.encoder1, inputs))));
}

/// Features of a set as a feature_dim x N matrix in record order.
inline nn::Matrix feature_matrix(const FeatureSet& set) {
  nn::Matrix x(set.feature_dim, static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::uint32_t d = 0; d < set.feature_dim; ++d)
      x(d, static_cast<Eigen::Index>(i)) = set.records[i].features[d];
  return x;
}

/// Targets for a batch. `rot_valid` marks samples that carry a rot label.
struct BatchLabels {
  nn::Vector time;
  std::vector<int> variety;
  nn::Vector fungicide;
  nn::Vector rot;
  std::vector<bool> rot_valid;
};

inline BatchLabels labels_of(const FeatureSet& set, const std::vector<std::size_t>& indices) {
  const auto n = static_cast<Eigen::Index>(indices.size());
  BatchLabels lb{nn::Vector(n), std::vector<int>(indices.size()), nn::Vector(n), nn::Vector::Zero(n),
                 std::vector<bool>(indices.size(), false)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& r = set.records[indices[static_cast<std::size_t>(j)]];
    lb.time[j] = r.time_norm;
    lb.variety[static_cast<std::size_t>(j)] = r.variety_id;
    lb.fungicide[j] = r.fungicide ? 1.0 : 0.0;
    if (r.rot) {
      lb.rot[j] = *r.rot ? 1.0 : 0.0;
      lb.rot_valid[static_cast<std::size_t>(j)] = true;
    }
  }
  return lb;
}

inline BatchLabels labels_of(const FeatureSet& set) {
  std::vector<std::size_t> all(set.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return labels_of(set, all);
}

struct LossBreakdown {
  double time = 0.0;
  double variety = 0.0;
  double fungicide = 0.0;
  double rot = 0.0;
  double total = 0.0;
};

namespace detail {

struct HeadLossGrads {
  LossBreakdown loss;
  nn::Vector time_pre;     // dL/d(time output)
  nn::Matrix variety_pre;  // dL/d(variety pre-activation)
  nn::Vector fungicide_pre;
  nn::Vector rot_pre;
};

inline nn::Vector one_hot_flat(const std::vector<int>& ids, int n_classes) {
  nn::Vector y = nn::Vector::Zero(static_cast<Eigen::Index>(ids.size()) * n_classes);
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= n_classes)
      throw ConfigError("variety label " + std::to_string(ids[j]) + " outside head's " +
                        std::to_string(n_classes) + " classes");
    y[static_cast<Eigen::Index>(j) * n_classes + ids[j]] = 1.0;
  }
  return y;
}

/// Loss per head plus gradients w.r.t. each head's pre-activation. With
/// `require_rot_labels`, an enabled rot head with no valid labels is a ConfigError;
/// otherwise such a batch contributes zero rot loss.
inline HeadLossGrads head_losses(const PretextModel& model, const BatchForward& fw, const BatchLabels& labels,
                                 bool require_rot_labels) {
  const Eigen::Index b = fw.latent.cols();
  auto check_len = [b](Eigen::Index n, const char* what) {
    if (n != b) throw ShapeError(std::string(what) + " labels do not match batch size");
  };
  HeadLossGrads out;
  if (model.heads.time) {
    check_len(labels.time.size(), "time");
    auto l = nn::mse_loss(fw.time, labels.time);
    out.loss.time = l.value;
    out.time_pre = std::move(l.gradient);
  }
  if (model.heads.variety) {
    check_len(static_cast<Eigen::Index>(labels.variety.size()), "variety");
    const int c = model.heads.n_classes;
    const nn::Vector probs = fw.variety.reshaped();
    auto l = nn::bce_loss(probs, one_hot_flat(labels.variety, c));
    out.loss.variety = l.value;
    const nn::Vector g = l.gradient.cwiseProduct(probs.cwiseProduct((1.0 - probs.array()).matrix()));
    out.variety_pre = g.reshaped(c, b);
  }
  if (model.heads.fungicide) {
    check_len(labels.fungicide.size(), "fungicide");
    auto l = nn::bce_loss(fw.fungicide, labels.fungicide);
    out.loss.fungicide = l.value;
    out.fungicide_pre = l.gradient.cwiseProduct(fw.fungicide.cwiseProduct((1.0 - fw.fungicide.array()).matrix()));
  }
  if (model.heads.rot) {
    check_len(static_cast<Eigen::Index>(labels.rot_valid.size()), "rot");
    std::vector<Eigen::Index> valid;
    for (Eigen::Index j = 0; j < b; ++j)
      if (labels.rot_valid[static_cast<std::size_t>(j)]) valid.push_back(j);
    out.rot_pre = nn::Vector::Zero(b);
    if (valid.empty()) {
      if (require_rot_labels) throw ConfigError("rot head enabled but no record carries a rot label");
    } else {
      nn::Vector p(static_cast<Eigen::Index>(valid.size()));
      nn::Vector y(p.size());
      for (std::size_t i = 0; i < valid.size(); ++i) {
        p[static_cast<Eigen::Index>(i)] = fw.rot[valid[i]];
        y[static_cast<Eigen::Index>(i)] = labels.rot[valid[i]];
      }
      auto l = nn::bce_loss(p, y);
      out.loss.rot = l.value;
      for (std::size_t i = 0; i < valid.size(); ++i) {
        const double pi = p[static_cast<Eigen::Index>(i)];
        out.rot_pre[valid[i]] = l.gradient[static_cast<Eigen::Index>(i)] * pi * (1.0 - pi);
      }
    }
  }
  const auto& h = model.heads;
  out.loss.total = (h.time ? out.loss.time : 0.0) + (h.variety ? out.loss.variety : 0.0) +
                   (h.fungicide ? out.loss.fungicide : 0.0) + (h.rot ? out.loss.rot : 0.0);
  return out;
}

}  // namespace detail

/// Sum of the enabled head losses for one batch of forward outputs.
inline LossBreakdown total_loss(const PretextModel& model, const BatchForward& outputs, const BatchLabels& labels) {
  return detail::head_losses(model, outputs, labels, /*require_rot_labels=*/true).loss;
}

struct LossAndGradient {
  LossBreakdown loss;
  nn::Vector gradient;  // same layout as flatten_parameters
};

inline LossAndGradient loss_and_gradient(const PretextModel& model, const nn::Matrix& inputs,
                                         const BatchLabels& labels, bool require_rot_labels = true) {
  const auto fw = forward_batch(model, inputs);
  const auto hl = detail::head_losses(model, fw, labels, require_rot_labels);

  nn::Matrix grad_latent = nn::Matrix::Zero(fw.latent.rows(), fw.latent.cols());
  nn::DenseGrad g_time, g_variety, g_fungicide, g_rot;
  if (model.time_head) grad_latent += nn::dense_backward(*model.time_head, fw.latent, hl.time_pre.transpose(), g_time);
  if (model.variety_head) grad_latent += nn::dense_backward(*model.variety_head, fw.latent, hl.variety_pre, g_variety);
  if (model.fungicide_head)
    grad_latent += nn::dense_backward(*model.fungicide_head, fw.latent, hl.fungicide_pre.transpose(), g_fungicide);
  if (model.rot_head) grad_latent += nn::dense_backward(*model.rot_head, fw.latent, hl.rot_pre.transpose(), g_rot);

  nn::DenseGrad g_enc2, g_enc1;
  const nn::Matrix grad_hidden =
      nn::dense_backward(model.encoder2, fw.hidden, nn::relu_backward(fw.pre2, grad_latent), g_enc2);
  nn::dense_backward(model.encoder1, fw.input, nn::relu_backward(fw.pre1, grad_hidden), g_enc1);

  LossAndGradient out{hl.loss, nn::Vector(parameter_count(model))};
  Eigen::Index at = 0;
  auto put = [&](const nn::DenseGrad& g) {
    out.gradient.segment(at, g.weights.size()) = g.weights.reshaped();
    at += g.weights.size();
    out.gradient.segment(at, g.bias.size()) = g.bias;
    at += g.bias.size();
  };
  put(g_enc1);
  put(g_enc2);
  if (model.time_head) put(g_time);
  if (model.variety_head) put(g_variety);
  if (model.fungicide_head) put(g_fungicide);
  if (model.rot_head) put(g_rot);
  return out;
}

struct TrainResult {
  PretextModel model;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

inline void check_trainable(const PretextModel& model, const FeatureSet& set) {
  if (set.empty()) throw EmptyInputError("training set is empty");
  if (static_cast<int>(set.feature_dim) != model.input_dim)
    throw ShapeError("feature_dim " + std::to_string(set.feature_dim) + " != model input_dim " +
                     std::to_string(model.input_dim));
  if (model.heads.variety && static_cast<int>(set.class_names.size()) > model.heads.n_classes)
    throw ConfigError("dataset has more classes than the variety head");
  if (model.heads.rot) {
    if (set.scale != Scale::Berry) throw ConfigError("rot head requires berry-scale data");
    const bool any = std::any_of(set.records.begin(), set.records.end(), [](const auto& r) { return r.rot.has_value(); });
    if (!any) throw ConfigError("rot head enabled but no record carries a rot label");
  }
}

/// Mini-batch Adam on the summed head losses, reshuffling every epoch. Deterministic per cfg.seed.
inline TrainResult train(PretextModel model, const FeatureSet& set, const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  check_trainable(model, set);

  const nn::Matrix x = feature_matrix(set);
  nn::Vector params = flatten_parameters(model);
  auto adam = nn::AdamState::for_size(params.size(), cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result{model, {}};
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      nn::Matrix xb(x.rows(), static_cast<Eigen::Index>(idx.size()));
      for (std::size_t j = 0; j < idx.size(); ++j) xb.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(idx[j]));
      const auto lg = loss_and_gradient(result.model, xb, labels_of(set, idx), /*require_rot_labels=*/false);
      if (!std::isfinite(lg.loss.total))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
      try {
        nn::adam_step(params, lg.gradient, adam);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      }
      assign_parameters(result.model, params);
      loss_sum += lg.loss.total;
      ++batches;
    }
    result.epoch_loss.push_back(loss_sum / batches);
  }
  return result;
}

struct Predictions {
  std::optional<double> time_days;
  std::optional<int> variety;
  std::optional<bool> fungicide;
  std::optional<bool> rot;
};

inline Predictions predictions_from(const HeadOutputs& out, double span_days) {
  Predictions p;
  if (out.time) p.time_days = std::clamp(*out.time, 0.0, 1.0) * span_days;
  if (out.variety) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < out.variety->size(); ++c)
      if ((*out.variety)[c] > (*out.variety)[best]) best = c;
    p.variety = static_cast<int>(best);
  }
  if (out.fungicide) p.fungicide = *out.fungicide >= 0.5;
  if (out.rot) p.rot = *out.rot >= 0.5;
  return p;
}

inline Predictions predict(const PretextModel& model, const nn::Vector& f, double span_days) {
  return predictions_from(forward(model, f), span_days);
}

// Persistence ---------------------------------------------------------------

namespace detail {

inline nlohmann::json layer_to_json(const nn::DenseLayer& l) {
  nlohmann::json w = nlohmann::json::array();
  for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(l.weights.cols()));
    for (Eigen::Index c = 0; c < l.weights.cols(); ++c) row[static_cast<std::size_t>(c)] = l.weights(r, c);
    w.push_back(row);
  }
  return {{"weights", w}, {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}};
}

inline nn::DenseLayer layer_from_json(const nlohmann::json& j, Eigen::Index out_dim, Eigen::Index in_dim,
                                      const std::string& name) {
  const auto& w = j.at("weights");
  const auto bias = j.at("bias").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(w.size()) != out_dim || static_cast<Eigen::Index>(bias.size()) != out_dim)
    throw ValidationError(name + ": expected " + std::to_string(out_dim) + " output rows");
  nn::DenseLayer l{nn::Matrix(out_dim, in_dim), nn::Vector(out_dim)};
  for (Eigen::Index r = 0; r < out_dim; ++r) {
    const auto row = w[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != in_dim)
      throw ValidationError(name + ": row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                            " entries, expected " + std::to_string(in_dim));
    for (Eigen::Index c = 0; c < in_dim; ++c) l.weights(r, c) = row[static_cast<std::size_t>(c)];
    l.bias[r] = bias[static_cast<std::size_t>(r)];
  }
  if (!l.weights.allFinite() || !l.bias.allFinite()) throw ValidationError(name + ": non-finite parameter");
  return l;
}

}  // namespace detail

inline nlohmann::json model_to_json(const PretextModel& m) {
  nlohmann::json j;
  j["input_dim"] = m.input_dim;
  j["heads"] = {{"time", m.heads.time},
                {"variety", m.heads.variety},
                {"n_classes", m.heads.n_classes},
                {"fungicide", m.heads.fungicide},
                {"rot", m.heads.rot}};
  nlohmann::json layers;
  detail::for_each_layer(m, [&](const char* name, const nn::DenseLayer& l) { layers[name] = detail::layer_to_json(l); });
  j["layers"] = layers;
  return j;
}

inline PretextModel model_from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("input_dim").get<int>();
    const auto& h = j.at("heads");
    HeadConfig heads{h.at("time").get<bool>(), h.at("variety").get<bool>(), h.at("n_classes").get<int>(),
                     h.at("fungicide").get<bool>(), h.at("rot").get<bool>()};
    if (n < 4) throw ValidationError("input_dim must be >= 4");
    if (!heads.any()) throw ValidationError("model has no heads");
    const auto& layers = j.at("layers");
    PretextModel m;
    m.input_dim = n;
    m.heads = heads;
    const int hidden = n / 2;
    const int latent = n / 4;
    m.encoder1 = detail::layer_from_json(layers.at("encoder1"), hidden, n, "encoder1");
    m.encoder2 = detail::layer_from_json(layers.at("encoder2"), latent, hidden, "encoder2");
    if (heads.time) m.time_head = detail::layer_from_json(layers.at("time_head"), 1, latent, "time_head");
    if (heads.variety) {
      if (heads.n_classes < 1) throw ValidationError("variety head needs n_classes >= 1");
      m.variety_head = detail::layer_from_json(layers.at("variety_head"), heads.n_classes, latent, "variety_head");
    }
    if (heads.fungicide) m.fungicide_head = detail::layer_from_json(layers.at("fungicide_head"), 1, latent, "fungicide_head");
    if (heads.rot) m.rot_head = detail::layer_from_json(layers.at("rot_head"), 1, latent, "rot_head");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model document: ") + e.what());
  }
}

}  // namespace tltrack
