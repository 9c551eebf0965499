// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include "tempseg/featio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <limits>
#include <unordered_map>

#include "tempseg/error.hpp"

namespace tempseg::featio {

namespace {

static_assert(std::endian::native == std::endian::little,
              "feature I/O assumes a little-endian host");

using nlohmann::json;

constexpr char kMagic[4] = {'T', 'F', 'F', '1'};
constexpr std::size_t kHeaderBytes = 4 + 1 + 4 + 4 + 4;

template <class U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <class U>
U get(const std::string& bytes, std::size_t offset) {
  U v;
  std::memcpy(&v, bytes.data() + offset, sizeof(U));
  return v;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Segment parse_segment(const json& j, const std::string& context) {
  if (!j.is_object() || !j.contains("start") || !j.contains("end")) {
    throw FormatError(context + ": segment needs start and end");
  }
  return {j.at("start").get<double>(), j.at("end").get<double>()};
}

}  // namespace

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kAudio:
      return "audio";
    case Modality::kVideo:
      return "video";
    case Modality::kSynthetic:
      return "synthetic";
  }
  return "unknown";
}

Modality parse_modality(std::string_view name) {
  if (name == "audio") return Modality::kAudio;
  if (name == "video") return Modality::kVideo;
  if (name == "synthetic") return Modality::kSynthetic;
  throw InvalidArgument("unknown modality '" + std::string(name) + "'");
}

std::size_t feature_count(std::size_t raw_length, const EncoderGeometry& geom) {
  if (geom.receptive_length < 1 || geom.stride < 1 || !(geom.rate > 0)) {
    throw InvalidArgument("encoder geometry needs f_L >= 1, f_S >= 1, rate > 0");
  }
  if (raw_length < geom.receptive_length) return 0;
  return (raw_length - geom.receptive_length) / geom.stride + 1;
}

void validate_ground_truth(const SegmentSet& segments, std::optional<double> duration,
                           std::string_view context) {
  const std::string ctx(context);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& s = segments[i];
    if (!(s.start >= 0.0) || !(s.end > s.start)) {
      throw FormatError(ctx + ": segment " + std::to_string(i) + " must satisfy 0 <= start < end");
    }
    if (duration && s.end > *duration + 1e-9) {
      throw FormatError(ctx + ": segment " + std::to_string(i) + " ends after duration");
    }
    if (i > 0 && s.start < segments[i - 1].end) {
      throw FormatError(ctx + ": ground-truth segments must be sorted and non-overlapping");
    }
  }
}

// --- Feature files ------------------------------------------------------------------

void store_features(const std::filesystem::path& path, const FeatureSequence& seq) {
  if (seq.dim == 0) throw InvalidArgument("store_features: dim must be positive");
  if (seq.valid_len > seq.rows()) throw InvalidArgument("store_features: valid_len exceeds rows");
  if (seq.valid_len > std::numeric_limits<std::uint32_t>::max() ||
      seq.dim > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("store_features: sequence too large for TFF1");
  }
  std::string out(kMagic, 4);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(seq.modality));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.dim));
  put<float>(out, seq.feature_fps);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.valid_len));
  out.append(reinterpret_cast<const char*>(seq.frames.data()),
             seq.valid_len * seq.dim * sizeof(float));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError("failed writing " + path.string());
}

FeatureSequence load_features(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  const std::string where = path.string();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(where + ": bad magic");
  }
  if (bytes.size() < kHeaderBytes) throw FormatError(where + ": truncated header");
  const auto tag = get<std::uint8_t>(bytes, 4);
  if (tag > 2) throw FormatError(where + ": unknown modality tag " + std::to_string(tag));

  FeatureSequence seq;
  seq.id = path.stem().string();
  seq.modality = static_cast<Modality>(tag);
  seq.dim = get<std::uint32_t>(bytes, 5);
  seq.feature_fps = get<float>(bytes, 9);
  seq.valid_len = get<std::uint32_t>(bytes, 13);
  if (seq.dim == 0) throw FormatError(where + ": header dim is 0");

  const std::size_t payload = bytes.size() - kHeaderBytes;
  const std::size_t expected = seq.valid_len * seq.dim * sizeof(float);
  if (payload < expected) throw FormatError(where + ": truncated payload");
  if (payload > expected) {
    throw FormatError(where + ": dim mismatch vs header (payload of " + std::to_string(payload) +
                      " bytes, header implies " + std::to_string(expected) + ")");
  }
  seq.frames.resize(seq.valid_len * seq.dim);
  std::memcpy(seq.frames.data(), bytes.data() + kHeaderBytes, expected);
  seq.mask.assign(seq.valid_len, 1);
  return seq;
}

FeatureSequence pad_or_truncate(const FeatureSequence& seq, std::size_t max_len) {
  if (max_len < 1) throw InvalidArgument("pad_or_truncate: max_len must be >= 1");
  FeatureSequence out = seq;
  const std::size_t keep = std::min(seq.valid_len, max_len);
  out.frames.assign(max_len * seq.dim, 0.0f);
  std::copy_n(seq.frames.begin(), keep * seq.dim, out.frames.begin());
  out.valid_len = keep;
  out.mask.assign(max_len, 0);
  std::fill_n(out.mask.begin(), keep, 1);
  return out;
}

// --- Annotations and manifests --------------------------------------------------------

std::vector<Annotation> read_annotations(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open annotations " + path.string());
  std::vector<Annotation> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string ctx = path.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(ctx + ": " + e.what());
    }
    try {
      Annotation a;
      a.id = j.at("id").get<std::string>();
      a.duration = j.at("duration").get<double>();
      for (const auto& s : j.at("segments")) a.segments.push_back(parse_segment(s, ctx));
      validate_ground_truth(a.segments, a.duration, ctx);
      rows.push_back(std::move(a));
    } catch (const json::exception& e) {
      throw FormatError(ctx + ": " + e.what());
    }
  }
  return rows;
}

void write_annotations(const std::filesystem::path& path, const std::vector<Annotation>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  for (const auto& a : rows) {
    json segs = json::array();
    for (const auto& s : a.segments) segs.push_back({{"start", s.start}, {"end", s.end}});
    f << json{{"id", a.id}, {"duration", a.duration}, {"segments", segs}}.dump() << '\n';
  }
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open manifest " + path.string());
  try {
    const json j = json::parse(f);
    if (!j.is_array()) throw FormatError(path.string() + ": manifest must be a JSON array");
    std::vector<ManifestRow> rows;
    for (const auto& e : j) {
      rows.push_back({e.at("features").get<std::string>(), e.at("annotations_id").get<std::string>()});
    }
    return rows;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  json j = json::array();
  for (const auto& r : rows) j.push_back({{"features", r.features}, {"annotations_id", r.annotations_id}});
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  f << j.dump(1) << '\n';
}

DatasetManifest load_dataset(const std::filesystem::path& manifest_path,
                             std::optional<std::filesystem::path> annotations_path) {
  const auto base = manifest_path.parent_path();
  const auto ann_path = annotations_path.value_or(base / "annotations.jsonl");
  const auto rows = read_manifest(manifest_path);
  const auto annotations = read_annotations(ann_path);

  std::unordered_map<std::string, const Annotation*> by_id;
  for (const auto& a : annotations) by_id.emplace(a.id, &a);

  DatasetManifest ds;
  for (const auto& r : rows) {
    const auto it = by_id.find(r.annotations_id);
    const Annotation* found = it == by_id.end() ? nullptr : it->second;
    if (!found) {
      throw FormatError(manifest_path.string() + ": no annotation with id " + r.annotations_id);
    }
    std::filesystem::path fp = r.features;
    if (fp.is_relative()) fp = base / fp;
    // Only the header is needed for the modality.
    std::ifstream f(fp, std::ios::binary);
    char head[5];
    if (!f || !f.read(head, 5) || std::memcmp(head, kMagic, 4) != 0) {
      throw FormatError(fp.string() + ": missing or not a TFF1 file");
    }
    ds.entries.push_back({fp, *found, static_cast<Modality>(static_cast<std::uint8_t>(head[4]))});
  }
  return ds;
}

}  // namespace tempseg::featio
