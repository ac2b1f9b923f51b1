#pragma once

// Plain-text exports: embedded coordinate rows, rollout rows, and static SVG scatter plots.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tltrack/errors.hpp"
#include "tltrack/trajectory_model.hpp"

namespace tltrack {

struct CoordinateRow {
  std::string split;  // "train" or "test"
  std::uint32_t track_id = 0;
  int session_index = 0;
  double x = 0.0;
  double y = 0.0;
  int variety_id = 0;
  bool fungicide = false;
  std::optional<bool> rot;
  double time_norm = 0.0;
};

inline constexpr const char* kCoordinateHeader = "split,track_id,session_index,x,y,variety_id,fungicide,rot,time_norm";

inline void write_coordinates_csv(const std::vector<CoordinateRow>& rows, std::ostream& out) {
  out << kCoordinateHeader << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : rows) {
    out << r.split << ',' << r.track_id << ',' << r.session_index << ',' << r.x << ',' << r.y << ',' << r.variety_id
        << ',' << (r.fungicide ? 1 : 0) << ',' << (r.rot ? (*r.rot ? "1" : "0") : "") << ',' << r.time_norm << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline std::vector<CoordinateRow> read_coordinates_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCoordinateHeader)
    throw ValidationError("coordinate file: expected header '" + std::string(kCoordinateHeader) + "'");
  std::vector<CoordinateRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != 9) throw ValidationError("coordinate file line " + std::to_string(line_no) + ": expected 9 fields");
    try {
      CoordinateRow r;
      r.split = cells[0];
      r.track_id = static_cast<std::uint32_t>(std::stoul(cells[1]));
      r.session_index = std::stoi(cells[2]);
      r.x = std::stod(cells[3]);
      r.y = std::stod(cells[4]);
      r.variety_id = std::stoi(cells[5]);
      r.fungicide = cells[6] == "1";
      if (!cells[7].empty()) r.rot = cells[7] == "1";
      r.time_norm = std::stod(cells[8]);
      if (!std::isfinite(r.x) || !std::isfinite(r.y)) throw ValidationError("non-finite coordinate");
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ValidationError("coordinate file line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return rows;
}

/// Groups rows into tracks ordered by session; rows of other splits are ignored unless `split` is empty.
inline std::vector<Track> tracks_from_rows(const std::vector<CoordinateRow>& rows, const std::string& split = "") {
  std::map<std::uint32_t, Track> by_id;
  for (const auto& r : rows) {
    if (!split.empty() && r.split != split) continue;
    auto& t = by_id[r.track_id];
    t.track_id = r.track_id;
    t.variety_id = r.variety_id;
    t.fungicide = r.fungicide;
    t.points.push_back({r.session_index, Point2(r.x, r.y)});
  }
  std::vector<Track> out;
  for (auto& [id, t] : by_id) {
    std::sort(t.points.begin(), t.points.end(),
              [](const TrackPoint& a, const TrackPoint& b) { return a.session_index < b.session_index; });
    out.push_back(std::move(t));
  }
  return out;
}

inline void write_rollout_csv(const std::vector<Point2>& points, std::ostream& out) {
  out << "step,x,y\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t s = 0; s < points.size(); ++s) out << s << ',' << points[s].x() << ',' << points[s].y() << '\n';
}

inline std::vector<Point2> read_rollout_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "step,x,y") throw ValidationError("rollout file: expected header 'step,x,y'");
  std::vector<Point2> pts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != 3) throw ValidationError("rollout file: expected 3 fields per row");
    try {
      pts.emplace_back(std::stod(cells[1]), std::stod(cells[2]));
    } catch (const std::logic_error&) {
      throw ValidationError("rollout file: malformed number");
    }
  }
  return pts;
}

// SVG -------------------------------------------------------------------------

enum class ColorKey { Time, Variety, Fungicide };

inline ColorKey color_key_from_string(const std::string& s) {
  if (s == "time") return ColorKey::Time;
  if (s == "variety" || s == "class") return ColorKey::Variety;
  if (s == "fungicide") return ColorKey::Fungicide;
  throw ConfigError("unknown color key '" + s + "' (expected time, variety or fungicide)");
}

namespace detail {

inline std::string hex_color(double r, double g, double b) {
  auto c = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  std::ostringstream os;
  os << '#' << std::hex << std::setfill('0') << std::setw(2) << c(r) << std::setw(2) << c(g) << std::setw(2) << c(b);
  return os.str();
}

/// Categorical palette (tab10) extended by hue rotation.
inline std::string category_color(int id) {
  static const char* kTab10[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  if (id >= 0 && id < 10) return kTab10[id];
  const double h = std::fmod(id * 0.618033988749895, 1.0) * 6.0;
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  const int seg = static_cast<int>(h);
  const double rgb[6][3] = {{1, x, 0}, {x, 1, 0}, {0, 1, x}, {0, x, 1}, {x, 0, 1}, {1, 0, x}};
  return hex_color(0.85 * rgb[seg][0], 0.85 * rgb[seg][1], 0.85 * rgb[seg][2]);
}

/// Dark purple -> teal -> yellow ramp for t in [0, 1].
inline std::string ramp_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double stops[3][3] = {{0.267, 0.005, 0.329}, {0.128, 0.567, 0.551}, {0.993, 0.906, 0.144}};
  const int i = t < 0.5 ? 0 : 1;
  const double u = t < 0.5 ? t * 2.0 : (t - 0.5) * 2.0;
  return hex_color(stops[i][0] + u * (stops[i + 1][0] - stops[i][0]), stops[i][1] + u * (stops[i + 1][1] - stops[i][1]),
                   stops[i][2] + u * (stops[i + 1][2] - stops[i][2]));
}

}  // namespace detail

/// One <circle> per row and one <polyline> per overlay path.
inline void write_svg_plot(const std::vector<CoordinateRow>& rows, ColorKey key,
                           const std::vector<std::vector<Point2>>& overlays, std::ostream& out, int size_px = 640) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
  auto grow = [&](double x, double y) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  };
  for (const auto& r : rows) grow(r.x, r.y);
  for (const auto& path : overlays)
    for (const auto& p : path) grow(p.x(), p.y());
  if (!std::isfinite(x0)) x0 = y0 = 0.0, x1 = y1 = 1.0;
  const double span = std::max({x1 - x0, y1 - y0, 1e-9});
  const double margin = 20.0;
  const double scale = (size_px - 2.0 * margin) / span;
  auto px = [&](double x) { return margin + (x - x0) * scale; };
  auto py = [&](double y) { return size_px - margin - (y - y0) * scale; };

  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size_px << "\" height=\"" << size_px
      << "\" viewBox=\"0 0 " << size_px << ' ' << size_px << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g id=\"points\">\n";
  for (const auto& r : rows) {
    std::string color;
    switch (key) {
      case ColorKey::Time: color = detail::ramp_color(r.time_norm); break;
      case ColorKey::Variety: color = detail::category_color(r.variety_id); break;
      case ColorKey::Fungicide: color = r.fungicide ? "#d62728" : "#1f77b4"; break;
    }
    out << "<circle cx=\"" << px(r.x) << "\" cy=\"" << py(r.y) << "\" r=\"2.5\" fill=\"" << color
        << "\" fill-opacity=\"0.7\"/>\n";
  }
  out << "</g>\n<g id=\"rollouts\">\n";
  for (const auto& path : overlays) {
    out << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < path.size(); ++i) out << (i ? " " : "") << px(path[i].x()) << ',' << py(path[i].y());
    out << "\"/>\n";
  }
  out << "</g>\n</svg>\n";
}

}  // namespace tltrack
