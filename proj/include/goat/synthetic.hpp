#pragma once

#include "goat/dataset.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace goat {

// Desk-scale stand-in for a multi-person long-form video dataset.
//
// Every clip i draws a latent formation quality q_i in [0,1]. ceil(T/4) clips
// are "element" clips; only those count toward the score:
//   score = score_min + (score_max - score_min) * mean_{i in elements} q_i.
// Clip features embed q_i along a fixed direction on every clip, so average
// pooling sees the non-element clips as distractors; those clips also carry
// extra isotropic noise. Actor features and positions tell
// the clips apart: element clips show a regular polygon whose positional
// noise shrinks as q_i grows, plus an "element" appearance direction;
// non-element clips show scattered actors with a different appearance.
struct SyntheticConfig {
  std::size_t clips = 32;
  std::size_t actors = 8;
  std::size_t feature_dim = 64;
  std::size_t samples = 80;
  std::uint64_t seed = 0;
  double score_min = 0.0;
  double score_max = 100.0;
  double feature_noise = 0.02;
  double background_noise = 0.3;  // extra isotropic noise on non-element clip features
  double position_noise = 0.05;
  double signal_strength = 4.0;
  double appearance_strength = 4.0;
  double polygon_radius = 0.3;
  std::size_t frames_per_clip = 10;
  std::optional<double> fixed_quality;

  Json to_json() const;
  static SyntheticConfig from_json(const Json& j);
};

struct SyntheticTruth {
  std::vector<double> quality;     // T
  std::vector<bool> element_mask;  // T, exactly ceil(T/4) true
  double oracle_score = 0.0;
};

struct SyntheticSample {
  VideoSample sample;
  SyntheticTruth truth;
};

// Throws InvalidArgument unless T >= 4, N >= 2, d >= 4, K >= 8.
void validate(const SyntheticConfig& config);

std::vector<SyntheticSample> generate_synthetic_dataset(const SyntheticConfig& config);

// Manifest with a 3:1 split drawn from the config seed.
DatasetManifest synthetic_manifest(const SyntheticConfig& config, const std::vector<SyntheticSample>& samples);

std::size_t element_clip_count(std::size_t clips);

Json truth_to_json(const std::vector<SyntheticSample>& samples);

}  // namespace goat
