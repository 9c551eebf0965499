// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "tempseg/error.hpp"
#include "tempseg/featio.hpp"

namespace tempseg::featio {

namespace {

constexpr int kPlacementAttempts = 100;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<PlantedSegment> place_segments(std::mt19937_64& rng, std::size_t frames,
                                           std::size_t count, std::size_t min_len,
                                           std::size_t max_len) {
  if (count == 0) return {};
  if (min_len > max_len || max_len > frames) {
    throw InvalidArgument("synth: segment length bounds do not fit the sequence");
  }
  std::uniform_int_distribution<std::size_t> len_dist(min_len, max_len);
  for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
    std::vector<PlantedSegment> segs;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t len = len_dist(rng);
      std::uniform_int_distribution<std::size_t> start_dist(0, frames - len);
      const std::size_t s = start_dist(rng);
      segs.push_back({s, s + len});
    }
    std::sort(segs.begin(), segs.end(),
              [](const auto& a, const auto& b) { return a.begin_frame < b.begin_frame; });
    bool ok = true;
    // At least one genuine frame between neighbours.
    for (std::size_t i = 1; i < segs.size(); ++i) {
      if (segs[i].begin_frame <= segs[i - 1].end_frame) ok = false;
    }
    if (ok) return segs;
  }
  throw InvalidArgument("synth: could not place " + std::to_string(count) +
                        " disjoint segments after " + std::to_string(kPlacementAttempts) +
                        " attempts");
}

}  // namespace

SynthSample synth_sample(std::uint64_t seed, const SynthConfig& config) {
  if (config.n_forged > 3) throw InvalidArgument("synth: n_forged must be in [0, 3]");
  if (config.dim == 0 || !(config.feature_fps > 0) || !(config.duration_sec > 0)) {
    throw InvalidArgument("synth: dim, fps and duration must be positive");
  }
  const auto frames = static_cast<std::size_t>(std::floor(config.duration_sec * config.feature_fps + 1e-9));
  if (frames == 0) throw InvalidArgument("synth: duration shorter than one frame");
  if (frames > config.max_len) {
    throw InvalidArgument("synth: duration x fps = " + std::to_string(frames) +
                          " exceeds max_len " + std::to_string(config.max_len));
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t dim = config.dim;

  // 5-frame moving average of iid N(0, 1), computed over a 4-frame margin so
  // every output frame averages exactly five draws.
  constexpr std::size_t kSmooth = 5;
  std::vector<double> raw((frames + kSmooth - 1) * dim);
  for (auto& v : raw) v = normal(rng);
  std::vector<double> noise(frames * dim, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t k = 0; k < kSmooth; ++k)
      for (std::size_t d = 0; d < dim; ++d) noise[t * dim + d] += raw[(t + k) * dim + d] / kSmooth;

  const auto min_len = static_cast<std::size_t>(std::ceil(config.min_segment_sec * config.feature_fps - 1e-9));
  const auto max_len = static_cast<std::size_t>(std::floor(config.max_segment_fraction * frames + 1e-9));
  SynthSample out;
  out.placements = place_segments(rng, frames, config.n_forged, std::max<std::size_t>(min_len, 1), max_len);

  std::vector<double> shift(frames * dim, 0.0);
  std::vector<double> gain(frames, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (const auto& p : out.placements) {
    std::vector<double> offset(dim);
    for (auto& o : offset) o = sign(rng) ? config.shift_magnitude : -config.shift_magnitude;
    for (std::size_t t = p.begin_frame; t < p.end_frame; ++t) {
      gain[t] = config.noise_gain;
      for (std::size_t d = 0; d < dim; ++d) shift[t * dim + d] = offset[d];
    }
    out.segments.push_back({p.begin_frame / config.feature_fps, p.end_frame / config.feature_fps});
  }

  FeatureSequence& seq = out.sequence;
  seq.modality = Modality::kSynthetic;
  seq.dim = dim;
  seq.feature_fps = static_cast<float>(config.feature_fps);
  seq.valid_len = frames;
  seq.frames.resize(frames * dim);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t d = 0; d < dim; ++d)
      seq.frames[t * dim + d] = static_cast<float>(shift[t * dim + d] + gain[t] * noise[t * dim + d]);
  seq.mask.assign(frames, 1);
  return out;
}

void write_synth_dataset(const std::filesystem::path& dir, const SynthDatasetConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "features", ec);
  if (ec) throw FormatError("cannot create " + (dir / "features").string() + ": " + ec.message());

  std::vector<Annotation> annotations;
  std::vector<ManifestRow> manifest;
  for (std::size_t i = 0; i < config.count; ++i) {
    const std::uint64_t sample_seed = splitmix64(config.seed * 0x100000001b3ULL + i);
    std::mt19937_64 pick(sample_seed ^ 0xa5a5a5a5a5a5a5a5ULL);
    SynthConfig sc = config.sample;
    if (std::uniform_real_distribution<double>(0.0, 1.0)(pick) < config.genuine_fraction) {
      sc.n_forged = 0;
    } else {
      sc.n_forged = std::uniform_int_distribution<std::size_t>(1, 3)(pick);
    }
    SynthSample s = synth_sample(sample_seed, sc);
    char name[32];
    std::snprintf(name, sizeof(name), "syn_%06zu", i);
    s.sequence.id = name;
    const std::string rel = std::string("features/") + name + ".tff";
    store_features(dir / rel, s.sequence);
    annotations.push_back({name, s.sequence.duration_sec(), s.segments});
    manifest.push_back({rel, name});
  }
  write_annotations(dir / "annotations.jsonl", annotations);
  write_manifest(dir / "manifest.json", manifest);
}

}  // namespace tempseg::featio
