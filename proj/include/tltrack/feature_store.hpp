#pragma once

// Feature records, the TLTF binary container, and the train/test split policy.
//
// TLTF layout (little-endian):
//   "TLTF" | u32 version=1 | u64 n_records | u32 feature_dim | u32 meta_len | meta (JSON, meta_len bytes)
//   per record: u32 track_id | u16 session_index | f32 time_norm | u16 variety_id
//               | u8 flags (bit0 fungicide, bit1 rot, bit2 rot-valid) | u8 spatial_tag | feature_dim x f32

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tltrack/errors.hpp"

namespace tltrack {

enum class SpatialTag : std::uint8_t { Left = 0, Right = 1, None = 2 };
enum class Scale : std::uint8_t { Patch, Berry };

inline std::string to_string(Scale s) { return s == Scale::Berry ? "berry" : "patch"; }

inline Scale scale_from_string(const std::string& s) {
  if (s == "patch") return Scale::Patch;
  if (s == "berry") return Scale::Berry;
  throw ConfigError("unknown scale '" + s + "'");
}

struct FeatureRecord {
  std::uint32_t track_id = 0;
  std::uint16_t session_index = 0;
  float time_norm = 0.0F;
  std::uint16_t variety_id = 0;
  bool fungicide = false;
  std::optional<bool> rot;
  SpatialTag spatial_tag = SpatialTag::None;
  std::vector<float> features;

  bool operator==(const FeatureRecord&) const = default;
};

/// A homogeneous collection of records from one backbone at one scale.
struct FeatureSet {
  std::uint32_t feature_dim = 0;
  double span_days = 1.0;
  std::vector<std::string> class_names;
  std::string backbone;
  Scale scale = Scale::Patch;
  std::vector<FeatureRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }

  /// Same metadata, no records.
  FeatureSet header_only() const {
    FeatureSet out;
    out.feature_dim = feature_dim;
    out.span_days = span_days;
    out.class_names = class_names;
    out.backbone = backbone;
    out.scale = scale;
    return out;
  }

  bool operator==(const FeatureSet&) const = default;
};

inline constexpr std::uint32_t kTltfVersion = 1;
inline constexpr std::size_t kTltfFixedHeaderBytes = 24;
inline constexpr std::size_t kTltfRecordFixedBytes = 14;

inline double normalize_time(double day_index, double span_days) {
  if (!(span_days > 0.0) || !std::isfinite(span_days))
    throw RangeError("span_days must be positive, got " + std::to_string(span_days));
  if (!(day_index >= 0.0) || day_index > span_days)
    throw RangeError("day_index " + std::to_string(day_index) + " outside [0, " +
                     std::to_string(span_days) + "]");
  return day_index / span_days;
}

/// Throws ValidationError describing the first violated invariant.
inline void validate(const FeatureSet& set) {
  if (set.feature_dim == 0) throw ValidationError("feature_dim must be > 0");
  if (!(set.span_days > 0.0) || !std::isfinite(set.span_days))
    throw ValidationError("span_days must be a positive finite number");
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    const auto& r = set.records[i];
    const std::string where = "record " + std::to_string(i) + ": ";
    if (r.features.size() != set.feature_dim)
      throw ValidationError(where + "feature length " + std::to_string(r.features.size()) +
                            " != feature_dim " + std::to_string(set.feature_dim));
    if (!(r.time_norm >= 0.0F && r.time_norm <= 1.0F))
      throw ValidationError(where + "time_norm outside [0,1]");
    if (r.variety_id >= set.class_names.size())
      throw ValidationError(where + "variety_id " + std::to_string(r.variety_id) +
                            " >= class count " + std::to_string(set.class_names.size()));
    if (r.rot.has_value() && set.scale != Scale::Berry)
      throw ValidationError(where + "rot label present on a patch-scale set");
    if (static_cast<std::uint8_t>(r.spatial_tag) > 2) throw ValidationError(where + "bad spatial_tag");
    for (float f : r.features)
      if (!std::isfinite(f)) throw ValidationError(where + "non-finite feature value");
  }
}

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() && { return std::move(bytes_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const noexcept { return pos_; }

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }

  std::string raw(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n)
      throw ParseError(data_.size(), "truncated stream: needed " + std::to_string(n) +
                                         " bytes at offset " + std::to_string(pos_));
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline std::string encode_meta(const FeatureSet& set) {
  nlohmann::json meta;
  meta["span_days"] = set.span_days;
  meta["class_names"] = set.class_names;
  meta["backbone"] = set.backbone;
  meta["scale"] = to_string(set.scale);
  return meta.dump();
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_features(const FeatureSet& set) {
  validate(set);
  const std::string meta = detail::encode_meta(set);
  detail::ByteWriter w;
  w.raw("TLTF");
  w.u32(kTltfVersion);
  w.u64(set.records.size());
  w.u32(set.feature_dim);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.raw(meta);
  for (const auto& r : set.records) {
    w.u32(r.track_id);
    w.u16(r.session_index);
    w.f32(r.time_norm);
    w.u16(r.variety_id);
    std::uint8_t flags = r.fungicide ? 1U : 0U;
    if (r.rot.has_value()) flags |= (*r.rot ? 2U : 0U) | 4U;
    w.u8(flags);
    w.u8(static_cast<std::uint8_t>(r.spatial_tag));
    for (float f : r.features) w.f32(f);
  }
  return std::move(w).take();
}

inline FeatureSet decode_features(std::span<const std::uint8_t> bytes) {
  detail::ByteReader rd(bytes);
  if (rd.raw(4) != "TLTF") throw ParseError(0, "bad magic (expected \"TLTF\")");
  const std::size_t version_at = rd.offset();
  if (const auto v = rd.u32(); v != kTltfVersion)
    throw ParseError(version_at, "unsupported TLTF version " + std::to_string(v));
  const std::uint64_t n_records = rd.u64();
  const std::size_t dim_at = rd.offset();
  FeatureSet set;
  set.feature_dim = rd.u32();
  if (set.feature_dim == 0) throw ParseError(dim_at, "feature_dim is zero");
  const std::uint32_t meta_len = rd.u32();
  const std::size_t meta_at = rd.offset();
  const std::string meta_text = rd.raw(meta_len);
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    set.span_days = meta.at("span_days").get<double>();
    set.class_names = meta.at("class_names").get<std::vector<std::string>>();
    set.backbone = meta.value("backbone", std::string{});
    set.scale = scale_from_string(meta.value("scale", std::string{"patch"}));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_at, std::string("bad metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(meta_at, e.what());
  }
  if (!(set.span_days > 0.0)) throw ParseError(meta_at, "span_days must be positive");

  const std::size_t record_bytes = kTltfRecordFixedBytes + 4ULL * set.feature_dim;
  const std::size_t remaining = bytes.size() - rd.offset();
  set.records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n_records, remaining / record_bytes)));
  for (std::uint64_t i = 0; i < n_records; ++i) {
    FeatureRecord r;
    r.track_id = rd.u32();
    r.session_index = rd.u16();
    const std::size_t time_at = rd.offset();
    r.time_norm = rd.f32();
    if (!(r.time_norm >= 0.0F && r.time_norm <= 1.0F))
      throw ParseError(time_at, "time_norm outside [0,1]");
    const std::size_t variety_at = rd.offset();
    r.variety_id = rd.u16();
    if (r.variety_id >= set.class_names.size())
      throw ParseError(variety_at, "variety_id out of range");
    const std::size_t flags_at = rd.offset();
    const std::uint8_t flags = rd.u8();
    if (flags & ~0x7U) throw ParseError(flags_at, "unknown flag bits");
    r.fungicide = (flags & 1U) != 0;
    if (flags & 4U) {
      if (set.scale != Scale::Berry) throw ParseError(flags_at, "rot label on patch-scale file");
      r.rot = (flags & 2U) != 0;
    } else if (flags & 2U) {
      throw ParseError(flags_at, "rot bit set without rot-valid bit");
    }
    const std::size_t tag_at = rd.offset();
    const std::uint8_t tag = rd.u8();
    if (tag > 2) throw ParseError(tag_at, "bad spatial_tag " + std::to_string(tag));
    r.spatial_tag = static_cast<SpatialTag>(tag);
    r.features.resize(set.feature_dim);
    for (auto& f : r.features) {
      const std::size_t at = rd.offset();
      f = rd.f32();
      if (!std::isfinite(f)) throw ParseError(at, "non-finite feature value");
    }
    set.records.push_back(std::move(r));
  }
  if (rd.offset() != bytes.size()) throw ParseError(rd.offset(), "trailing bytes after last record");
  return set;
}

/// Validates first, then writes; a failing set emits no bytes.
inline void write_features(const FeatureSet& set, std::ostream& sink) {
  const auto bytes = encode_features(set);
  sink.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw Error("write failed");
}

inline FeatureSet read_features(std::istream& source) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(source)), std::istreambuf_iterator<char>());
  return decode_features(bytes);
}

struct TrainTestSplit {
  FeatureSet train;
  FeatureSet test;
};

/// Left-tagged records always train, Right-tagged always test. Untagged records are
/// split by whole tracks: ceil(train_fraction * n_tracks) shuffled tracks go to train.
inline TrainTestSplit split_train_test(const FeatureSet& set, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw RangeError("train_fraction must be in (0,1)");
  if (set.empty()) throw EmptyInputError("cannot split an empty feature set");

  std::vector<std::uint32_t> tracks;
  for (const auto& r : set.records)
    if (r.spatial_tag == SpatialTag::None) tracks.push_back(r.track_id);
  std::sort(tracks.begin(), tracks.end());
  tracks.erase(std::unique(tracks.begin(), tracks.end()), tracks.end());

  std::mt19937_64 rng(seed);
  std::shuffle(tracks.begin(), tracks.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(tracks.size()) - 1e-12));
  std::map<std::uint32_t, bool> to_train;
  for (std::size_t i = 0; i < tracks.size(); ++i) to_train[tracks[i]] = i < n_train;

  TrainTestSplit out{set.header_only(), set.header_only()};
  for (const auto& r : set.records) {
    const bool train = r.spatial_tag == SpatialTag::Left ||
                       (r.spatial_tag == SpatialTag::None && to_train.at(r.track_id));
    (train ? out.train : out.test).records.push_back(r);
  }
  return out;
}

}  // namespace tltrack
