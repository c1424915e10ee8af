#pragma once

#include "goat/geometry.hpp"
#include "goat/tensor.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace goat {

using Json = nlohmann::json;

// Closed 12-symbol action lexicon.
enum class ActionLabel : std::uint8_t {
  upper,
  lower,
  float_,
  none,
  acrobatic,
  cadence,
  required_1,
  required_2,
  required_3,
  required_4,
  required_5,
  free_element,
};
inline constexpr std::size_t kActionLabelCount = 12;

std::string_view to_string(ActionLabel label);
// Throws InvalidArgument for names outside the lexicon.
ActionLabel parse_action_label(std::string_view name);

// Actors of one clip's middle frame.
struct ActorFrame {
  Matrix features;               // N x d
  std::vector<Point2> positions;  // N, normalized to [0,1]^2

  std::size_t actor_count() const { return positions.size(); }
};

struct FormationLabel {
  std::vector<Point2> vertices;  // polygon order
  std::vector<bool> vertex_flags;  // per actor
};

struct ActionSegment {
  ActionLabel label = ActionLabel::none;
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;  // exclusive
  bool operator==(const ActionSegment&) const = default;
};

struct FormationAnnotation {
  std::size_t clip = 0;
  FormationLabel label;
};

struct VideoSample {
  std::string id;
  Matrix clip_features;  // T x d
  std::vector<ActorFrame> actor_frames;  // empty or T entries
  double score = 0.0;
  std::vector<ActionSegment> actions;
  std::vector<FormationAnnotation> formations;

  std::size_t clip_count() const { return static_cast<std::size_t>(clip_features.rows()); }
  bool has_actors() const { return !actor_frames.empty(); }
};

struct DatasetManifest {
  std::vector<std::string> sample_ids;
  double score_min = 0.0;
  double score_max = 1.0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::size_t feature_dim = 0;
  std::size_t clip_count = 0;
  std::size_t actor_count = 0;
  Json metadata = Json::object();

  double normalize(double score) const { return (score - score_min) / (score_max - score_min); }
  double denormalize(double unit) const { return score_min + unit * (score_max - score_min); }
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// 3:1 train/test split: |train| = round(0.75 K), deterministic in `seed`.
// Both index lists come back sorted. Throws for K < 4.
Split make_split(std::size_t sample_count, std::uint64_t seed);

// Throw InvalidArgument describing the first violated invariant.
void validate(const ActorFrame& frame);
void validate(const FormationLabel& label, std::size_t actor_count);
void validate(const VideoSample& sample, const DatasetManifest& manifest);
void validate(const DatasetManifest& manifest);

Json annotation_to_json(const VideoSample& sample);
// Fills id, score, actions and formations of `sample` from an annotation document.
void annotation_from_json(const Json& doc, VideoSample& sample);

Json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const Json& doc);

// Label of every frame in [0, frame_count) from half-open action intervals.
// Frames not covered by any interval are labelled `none`.
std::vector<ActionLabel> frame_labels(const std::vector<ActionSegment>& actions, std::size_t frame_count);

// Dataset directory layout:
//   manifest.json
//   features/<id>.logf         T x d clip features
//   actors/<id>.logf           (T*N) x d actor features, clip-major
//   positions/<id>.logf        (T*N) x 2 actor positions
//   annotations/<id>.json
void save_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest,
                  const std::vector<VideoSample>& samples);
struct Dataset {
  DatasetManifest manifest;
  std::vector<VideoSample> samples;  // manifest.sample_ids order

  std::vector<VideoSample> subset(const std::vector<std::string>& ids) const;
};
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace goat
