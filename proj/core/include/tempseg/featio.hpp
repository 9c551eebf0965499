// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors
//
// Feature sequences, annotations and their on-disk formats.
//
// Feature file ("TFF1", little-endian):
//   magic "TFF1" | u8 modality | u32 dim | f32 feature_fps | u32 valid_len |
//   valid_len x dim f32, row-major. Padding is never stored.
// Annotations: JSON Lines {"id", "duration", "segments": [{"start", "end"}]}.
// Manifest: JSON array of {"features": path, "annotations_id": id}; relative
// paths resolve against the manifest's directory.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tempseg::featio {

enum class Modality : std::uint8_t { kAudio = 0, kVideo = 1, kSynthetic = 2 };

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);

/// How a raw-time encoder turns T samples into feature frames.
struct EncoderGeometry {
  std::size_t receptive_length;  // f_L, raw-time units
  std::size_t stride;            // f_S, raw-time units
  double rate;                   // raw-time units per second
};

/// Number of feature frames an encoder emits for `raw_length` raw units:
/// floor((T - f_L) / f_S) + 1, or 0 when T < f_L.
std::size_t feature_count(std::size_t raw_length, const EncoderGeometry& geom);

struct FeatureSequence {
  std::string id;
  Modality modality = Modality::kSynthetic;
  std::size_t dim = 0;
  float feature_fps = 0.0f;
  /// rows() x dim, row-major.
  std::vector<float> frames;
  std::size_t valid_len = 0;
  /// One entry per row, a true-prefix of length valid_len.
  std::vector<std::uint8_t> mask;

  std::size_t rows() const { return dim == 0 ? 0 : frames.size() / dim; }
  double duration_sec() const { return feature_fps > 0 ? valid_len / double(feature_fps) : 0.0; }

  bool operator==(const FeatureSequence&) const = default;
};

struct Segment {
  double start;
  double end;

  double length() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

using SegmentSet = std::vector<Segment>;

/// Ground-truth shape: every end > start >= 0, sorted, non-overlapping, and
/// (when duration is given) inside [0, duration]. Throws FormatError.
void validate_ground_truth(const SegmentSet& segments, std::optional<double> duration,
                           std::string_view context);

// --- Feature files -------------------------------------------------------------

void store_features(const std::filesystem::path& path, const FeatureSequence& seq);
/// The id is taken from the file stem.
FeatureSequence load_features(const std::filesystem::path& path);

/// Exactly max_len rows: truncates, or appends zero rows with mask false.
FeatureSequence pad_or_truncate(const FeatureSequence& seq, std::size_t max_len);

// --- Annotations and manifests ----------------------------------------------------

struct Annotation {
  std::string id;
  double duration = 0.0;
  SegmentSet segments;

  bool operator==(const Annotation&) const = default;
};

std::vector<Annotation> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const std::vector<Annotation>& rows);

struct ManifestRow {
  std::string features;  // as written in the manifest
  std::string annotations_id;
};

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);

struct DatasetEntry {
  std::filesystem::path feature_path;
  Annotation annotation;
  Modality modality = Modality::kSynthetic;
};

struct DatasetManifest {
  std::vector<DatasetEntry> entries;
};

/// Joins a manifest with its annotations (default: annotations.jsonl next to
/// the manifest). Modality is read from each feature header.
DatasetManifest load_dataset(const std::filesystem::path& manifest_path,
                             std::optional<std::filesystem::path> annotations_path = {});

// --- Synthetic data -----------------------------------------------------------------

struct SynthConfig {
  double duration_sec = 10.0;
  std::size_t dim = 16;
  double feature_fps = 25.0;
  std::size_t n_forged = 0;  // 0..3
  double shift_magnitude = 1.5;
  std::size_t max_len = 1024;
  double min_segment_sec = 0.2;
  double max_segment_fraction = 0.4;
  double noise_gain = 1.5;
};

struct PlantedSegment {
  std::size_t begin_frame;  // inclusive
  std::size_t end_frame;    // exclusive
};

struct SynthSample {
  FeatureSequence sequence;
  SegmentSet segments;
  /// Frame-level placement actually used, in time order.
  std::vector<PlantedSegment> placements;
};

/// Smoothed Gaussian background with n_forged disjoint mean-shifted,
/// noise-amplified segments. Bit-reproducible for a given seed.
SynthSample synth_sample(std::uint64_t seed, const SynthConfig& config);

struct SynthDatasetConfig {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  SynthConfig sample;           // n_forged is drawn per sample
  double genuine_fraction = 0.5;
};

/// Writes features/<id>.tff, annotations.jsonl and manifest.json under `dir`.
void write_synth_dataset(const std::filesystem::path& dir, const SynthDatasetConfig& config);

}  // namespace tempseg::featio
