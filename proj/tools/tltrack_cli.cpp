// tltrack command-line driver: synth, train, embed, traj fit|rollout, eval, plot.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data error, 1 anything else.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tltrack/tltrack.hpp"

namespace fs = std::filesystem;
using namespace tltrack;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw ConfigError("cannot open '" + path + "' for reading");
  return in;
}

FeatureSet load_features(const std::string& path) {
  auto in = open_in(path, true);
  return read_features(in);
}

nlohmann::json load_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.byte, path + ": " + e.what());
  }
}

void save_json(const nlohmann::json& j, const std::string& path) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

std::vector<CoordinateRow> load_coordinates(const std::string& path) {
  auto in = open_in(path);
  return read_coordinates_csv(in);
}

Point2 parse_point(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw ConfigError("expected a point as x,y, got '" + s + "'");
  try {
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::logic_error&) {
    throw ConfigError("expected a point as x,y, got '" + s + "'");
  }
}

std::string group_file_name(const GroupKey& key) {
  if (key.first < 0) return "traj_pooled.json";
  return "traj_v" + std::to_string(key.first) + "_f" + (key.second ? "1" : "0") + ".json";
}

// synth ------------------------------------------------------------------------

struct SynthArgs {
  SynthConfig cfg;
  std::string scale = "patch";
  std::uint64_t seed = 0;
  std::string out;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic feature file with known planar ground truth");
  cmd->add_option("--classes", a.cfg.n_classes, "Number of varieties")->capture_default_str();
  cmd->add_option("--tracks", a.cfg.tracks_per_class, "Tracks per variety")->capture_default_str();
  cmd->add_option("--sessions", a.cfg.n_sessions, "Imaging sessions per track")->capture_default_str();
  cmd->add_option("--dim", a.cfg.feature_dim, "Feature dimension")->capture_default_str();
  cmd->add_option("--noise", a.cfg.noise_std, "Isotropic feature noise std")->capture_default_str();
  cmd->add_option("--span-days", a.cfg.span_days, "Season length in days")->capture_default_str();
  cmd->add_option("--fungicide-fraction", a.cfg.fungicide_fraction)->capture_default_str();
  cmd->add_option("--rot-fraction", a.cfg.rot_fraction, "Rotting tracks per class (berry scale)")->capture_default_str();
  cmd->add_option("--scale", a.scale, "patch or berry")->capture_default_str();
  cmd->add_option("--seed", a.seed)->capture_default_str();
  cmd->add_option("--out", a.out, "Output feature file")->required();
  cmd->callback([&a] {
    a.cfg.scale = scale_from_string(a.scale);
    const auto data = gen_synthetic(a.cfg, a.seed);
    auto out = open_out(a.out, true);
    write_features(data.set, out);
    if (!out) throw ConfigError("failed writing '" + a.out + "'");
    std::cout << data.set.size() << " records written to " << a.out << '\n';
  });
}

// train ------------------------------------------------------------------------

struct TrainArgs {
  std::string in;
  std::string heads = "time,variety,fungicide";
  TrainConfig cfg;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  std::string out;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "Train the pretext model on the train split of a feature file");
  cmd->add_option("--in", a.in, "Feature file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--heads", a.heads, "Comma-separated heads: time,variety,fungicide,rot")->capture_default_str();
  cmd->add_option("--lr", a.cfg.learning_rate)->capture_default_str();
  cmd->add_option("--epochs", a.cfg.epochs)->capture_default_str();
  cmd->add_option("--batch-size", a.cfg.batch_size)->capture_default_str();
  cmd->add_option("--train-fraction", a.train_fraction)->capture_default_str();
  cmd->add_option("--seed", a.seed)->capture_default_str();
  cmd->add_option("--out", a.out, "Model document")->required();
  cmd->callback([&a] {
    const auto set = load_features(a.in);
    const auto heads = parse_heads(a.heads, static_cast<int>(set.class_names.size()));
    const auto split = split_train_test(set, a.train_fraction, a.seed);
    auto model = build_model(static_cast<int>(set.feature_dim), heads, derive_seed(a.seed, 10));
    a.cfg.seed = derive_seed(a.seed, 11);
    const auto res = train(model, split.train, a.cfg);
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
      std::cout << "epoch " << e + 1 << " loss " << res.epoch_loss[e] << '\n';
    save_json(model_to_json(res.model), a.out);
    std::cerr << "trained on " << split.train.size() << " records; model written to " << a.out << '\n';
  });
}

// embed ------------------------------------------------------------------------

struct EmbedArgs {
  std::string model;
  std::string in;
  double train_fraction = 0.7;
  EmbeddingParams params;
  std::uint64_t seed = 0;
  std::string out;
  std::string coords;
};

std::vector<CoordinateRow> rows_for(const FeatureSet& set, const Eigen::Matrix2Xd& xy, const std::string& split) {
  std::vector<CoordinateRow> rows;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& r = set.records[i];
    const auto c = static_cast<Eigen::Index>(i);
    rows.push_back({split, r.track_id, r.session_index, xy(0, c), xy(1, c), r.variety_id, r.fungicide, r.rot,
                    static_cast<double>(r.time_norm)});
  }
  return rows;
}

void add_embed(CLI::App& app, EmbedArgs& a) {
  auto* cmd = app.add_subcommand("embed", "Project latent codes to the plane; train split fits, test split is placed");
  cmd->add_option("--model", a.model, "Model document")->required()->check(CLI::ExistingFile);
  cmd->add_option("--in", a.in, "Feature file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--train-fraction", a.train_fraction)->capture_default_str();
  cmd->add_option("--neighbors", a.params.n_neighbors)->capture_default_str();
  cmd->add_option("--min-dist", a.params.min_dist)->capture_default_str();
  cmd->add_option("--epochs", a.params.epochs, "Layout optimization epochs")->capture_default_str();
  cmd->add_option("--seed", a.seed)->capture_default_str();
  cmd->add_option("--out", a.out, "Embedding document")->required();
  cmd->add_option("--coords", a.coords, "Coordinate CSV")->required();
  cmd->callback([&a] {
    const auto model = model_from_json(load_json(a.model));
    const auto set = load_features(a.in);
    if (static_cast<int>(set.feature_dim) != model.input_dim)
      throw ShapeError("feature_dim " + std::to_string(set.feature_dim) + " != model input_dim " +
                       std::to_string(model.input_dim));
    const auto split = split_train_test(set, a.train_fraction, a.seed);
    if (split.train.empty()) throw EmptyInputError("train split is empty");
    a.params.seed = derive_seed(a.seed, 20);
    const auto emb = embed(encode_batch(model, feature_matrix(split.train)), a.params);
    auto rows = rows_for(split.train, emb.coords, "train");
    if (!split.test.empty()) {
      const auto test_xy = transform_new(emb, encode_batch(model, feature_matrix(split.test)));
      const auto test_rows = rows_for(split.test, test_xy, "test");
      rows.insert(rows.end(), test_rows.begin(), test_rows.end());
    }
    save_json(embedding_to_json(emb), a.out);
    auto out = open_out(a.coords);
    write_coordinates_csv(rows, out);
    std::cout << rows.size() << " coordinate rows (" << split.train.size() << " train, " << split.test.size()
              << " test) written to " << a.coords << '\n';
  });
}

// traj -------------------------------------------------------------------------

struct TrajFitArgs {
  std::string coords;
  std::string split = "train";
  int eps = 1;
  int k = 8;
  bool pooled = false;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

struct TrajRolloutArgs {
  std::string mixture;
  std::string start;
  int steps = 0;
  int sessions = 40;
  int eps = 1;
  std::string mode = "mean";
  std::uint64_t seed = 0;
  std::string out;
};

void add_traj(CLI::App& app, TrajFitArgs& f, TrajRolloutArgs& r) {
  auto* traj = app.add_subcommand("traj", "Fit velocity mixtures or roll out trajectories");
  traj->require_subcommand(1);

  auto* fit = traj->add_subcommand("fit", "Fit one mixture per (variety, fungicide) group");
  fit->add_option("--coords", f.coords, "Coordinate CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--split", f.split, "Rows to use: train, test or all")->capture_default_str();
  fit->add_option("--eps", f.eps, "Velocity horizon in sessions")->capture_default_str();
  fit->add_option("--k", f.k, "Mixture components")->capture_default_str();
  fit->add_flag("--pooled", f.pooled, "Fit a single mixture over all groups");
  fit->add_option("--seed", f.seed)->capture_default_str();
  fit->add_option("--out-dir", f.out_dir)->capture_default_str();
  fit->callback([&f] {
    const auto rows = load_coordinates(f.coords);
    const auto tracks = tracks_from_rows(rows, f.split == "all" ? "" : f.split);
    if (tracks.empty()) throw EmptyInputError("no rows with split '" + f.split + "'");
    const auto fitted = fit_grouped(tracks, f.eps, f.k, f.seed, f.pooled);
    for (const auto& w : fitted.warnings) std::cerr << "warning: " << w << '\n';
    if (fitted.models.empty()) throw InsufficientLengthError("every track or group was skipped; nothing to fit");
    std::error_code ec;
    fs::create_directories(f.out_dir, ec);
    for (const auto& [key, gmm] : fitted.models) {
      auto j = mixture_to_json(gmm);
      j["variety_id"] = key.first;
      j["fungicide"] = key.second;
      j["eps"] = f.eps;
      const auto path = (fs::path(f.out_dir) / group_file_name(key)).string();
      save_json(j, path);
      std::cout << path << " K=" << gmm.size() << '\n';
    }
  });

  auto* roll = traj->add_subcommand("rollout", "Integrate the conditional mean (or sampled) velocity from a start point");
  roll->add_option("--mixture", r.mixture, "Mixture document")->required()->check(CLI::ExistingFile);
  roll->add_option("--start", r.start, "Start point x,y")->required();
  roll->add_option("--steps", r.steps, "Steps; defaults to cover --sessions at the mixture's eps");
  roll->add_option("--sessions", r.sessions, "Season length used when --steps is omitted")->capture_default_str();
  roll->add_option("--mode", r.mode, "mean or sample")->capture_default_str();
  roll->add_option("--seed", r.seed)->capture_default_str();
  roll->add_option("--out", r.out, "Rollout CSV (stdout when omitted)");
  roll->callback([&r] {
    const auto j = load_json(r.mixture);
    const auto gmm = mixture_from_json<4>(j);
    RolloutMode mode;
    if (r.mode == "mean") mode = RolloutMode::Mean;
    else if (r.mode == "sample") mode = RolloutMode::Sample;
    else throw ConfigError("unknown rollout mode '" + r.mode + "' (expected mean or sample)");
    const int steps = r.steps > 0 ? r.steps : default_rollout_steps(r.sessions, j.value("eps", r.eps));
    const auto path = rollout(gmm, parse_point(r.start), steps, mode, r.seed);
    if (path.status == RolloutStatus::OutOfSupport) std::cerr << "warning: rollout truncated, " << path.message << '\n';
    if (r.out.empty()) {
      write_rollout_csv(path.points, std::cout);
    } else {
      auto out = open_out(r.out);
      write_rollout_csv(path.points, out);
    }
  });
}

// eval -------------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string in;
  std::string coords;
  int unseen = 0;
  bool all = false;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  std::string out;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* cmd = app.add_subcommand("eval", "Score per-head predictions, or run the unseen-class protocol");
  cmd->add_option("--model", a.model, "Model document")->check(CLI::ExistingFile);
  cmd->add_option("--in", a.in, "Feature file")->check(CLI::ExistingFile);
  cmd->add_option("--coords", a.coords, "Coordinate CSV for --unseen")->check(CLI::ExistingFile);
  cmd->add_option("--unseen", a.unseen, "Fit this many mixture components to the test coordinates");
  cmd->add_flag("--all", a.all, "Score every record instead of the test split");
  cmd->add_option("--train-fraction", a.train_fraction)->capture_default_str();
  cmd->add_option("--seed", a.seed)->capture_default_str();
  cmd->add_option("--out", a.out, "Report document");
  cmd->callback([&a] {
    EvalReport rep;
    bool have = false;
    if (!a.model.empty() || !a.in.empty()) {
      if (a.model.empty() || a.in.empty()) throw ConfigError("--model and --in must be given together");
      const auto model = model_from_json(load_json(a.model));
      const auto set = load_features(a.in);
      rep = eval_heads(model, a.all ? set : split_train_test(set, a.train_fraction, a.seed).test);
      have = true;
    }
    if (a.unseen > 0) {
      if (a.coords.empty()) throw ConfigError("--unseen needs --coords");
      const auto rows = load_coordinates(a.coords);
      std::vector<Eigen::Vector2d> pts;
      std::vector<int> labels;
      for (const auto& r : rows)
        if (a.all || r.split == "test") {
          pts.emplace_back(r.x, r.y);
          labels.push_back(r.variety_id);
        }
      const auto res = eval_unseen_classes(pts, labels, a.unseen, a.seed);
      rep.unseen_pa = res.percent;
      rep.unseen_components = a.unseen;
      if (!have) rep.count = pts.size();
      have = true;
    } else if (!a.coords.empty()) {
      throw ConfigError("--coords is only used with --unseen N");
    }
    if (!have) throw ConfigError("nothing to evaluate: give --model and --in, or --coords with --unseen N");
    std::cout << report_table(rep, !rep.backbone.empty());
    if (!a.out.empty()) save_json(report_to_json(rep), a.out);
  });
}

// plot -------------------------------------------------------------------------

struct PlotArgs {
  std::string coords;
  std::string color = "variety";
  std::string split = "all";
  std::vector<std::string> rollouts;
  std::string out;
};

void add_plot(CLI::App& app, PlotArgs& a, std::uint64_t& seed) {
  auto* cmd = app.add_subcommand("plot", "Write a static SVG scatter of embedded points with rollout overlays");
  cmd->add_option("--coords", a.coords, "Coordinate CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--color", a.color, "time, variety or fungicide")->capture_default_str();
  cmd->add_option("--split", a.split, "train, test or all")->capture_default_str();
  cmd->add_option("--rollout", a.rollouts, "Rollout CSV to overlay (repeatable)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", seed, "Accepted for uniformity; plotting is deterministic");
  cmd->add_option("--out", a.out, "SVG file")->required();
  cmd->callback([&a] {
    const auto key = color_key_from_string(a.color);
    auto rows = load_coordinates(a.coords);
    if (a.split != "all") std::erase_if(rows, [&](const CoordinateRow& r) { return r.split != a.split; });
    std::vector<std::vector<Point2>> overlays;
    for (const auto& p : a.rollouts) {
      auto in = open_in(p);
      overlays.push_back(read_rollout_csv(in));
    }
    auto out = open_out(a.out);
    write_svg_plot(rows, key, overlays, out);
    std::cout << rows.size() << " points, " << overlays.size() << " rollouts written to " << a.out << '\n';
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-space growth trajectories from time-lapse image features"};
  app.set_config("--config", "", "TOML/INI file supplying option defaults; flags override it");
  app.require_subcommand(1);

  SynthArgs synth;
  TrainArgs train_args;
  EmbedArgs embed_args;
  TrajFitArgs fit_args;
  TrajRolloutArgs roll_args;
  EvalArgs eval_args;
  PlotArgs plot_args;
  std::uint64_t plot_seed = 0;
  add_synth(app, synth);
  add_train(app, train_args);
  add_embed(app, embed_args);
  add_traj(app, fit_args, roll_args);
  add_eval(app, eval_args);
  add_plot(app, plot_args, plot_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << " (byte offset " << e.offset() << ")\n";
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
