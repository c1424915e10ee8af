#pragma once

#include "goat/attention.hpp"
#include "goat/dataset.hpp"
#include "goat/gradcheck.hpp"
#include "goat/tape.hpp"
#include "goat/train_config.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace goat {

// Square grid of equal patches over the unit square, indexed row-major.
class AnchorGrid {
 public:
  explicit AnchorGrid(std::size_t side);  // throws InvalidArgument for side < 2

  std::size_t side() const { return side_; }
  std::size_t patch_count() const { return side_ * side_; }
  double patch_size() const { return 1.0 / static_cast<double>(side_); }
  Point2 anchor(std::size_t patch) const;
  std::size_t patch_of(const Point2& p) const;  // points on the far edge go to the last patch

 private:
  std::size_t side_;
};

// Per axis d/2 channels of interleaved sin/cos: for pair j,
//   sin(p * scale / 10000^(2j/(d/2))), cos(...).
// x fills the first half, y the second. Throws unless d % 4 == 0.
RowVector positional_encoding(const Point2& anchor, std::size_t dim, double scale = 1.0);
Matrix grid_positional_encoding(const AnchorGrid& grid, std::size_t dim);

struct VertexPrediction {
  Vector confidences;  // P, in (0,1)
  Matrix offsets;      // P x 2, patch units relative to the anchor
};

struct VertexTargets {
  Vector presence;  // P, 0/1
  Matrix offsets;   // P x 2, zero where presence is 0, each component in [-0.5, 0.5]
};

// Throws InvalidArgument if two vertices fall in the same patch.
VertexTargets build_targets(const std::vector<Point2>& vertices, const AnchorGrid& grid);

struct FormationLoss {
  double bce = 0.0;
  double mse = 0.0;
  double total = 0.0;
};

// BCE summed over every patch (confidences clamped to [1e-7, 1 - 1e-7]);
// squared offset error summed over positive patches; total = bce + lambda mse.
FormationLoss formation_loss(const VertexPrediction& pred, const VertexTargets& targets, double lambda = 1.0);

struct DetectedVertex {
  double x = 0.0;
  double y = 0.0;
  double confidence = 0.0;
};

// Patches with confidence > threshold, anchor + offset * patch size clamped to
// the unit square, sorted by confidence descending.
std::vector<DetectedVertex> decode_vertices(const VertexPrediction& pred, const AnchorGrid& grid, double threshold);

struct DetectionScore {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
  double mean_offset_error = 0.0;  // normalized units, over matched pairs
  std::size_t matched = 0;
  std::size_t predicted = 0;
  std::size_t truth = 0;
};

// Greedy one-to-one matching by ascending distance within `radius`.
// Empty prediction sets have precision 1.
DetectionScore evaluate_detection(const std::vector<Point2>& predicted, const std::vector<Point2>& truth, double radius);
// Pools match counts over images, then computes P/R/F1.
DetectionScore aggregate_detection(std::span<const DetectionScore> per_image);

struct DetectorConfig {
  std::size_t grid_side = 32;
  std::size_t feature_dim = 16;
  std::size_t heads = 1;
  std::size_t hidden = 32;
  double lambda = 1.0;
  double threshold = 0.5;
  double match_radius = 0.0;  // 0 means one patch diagonal

  double radius() const;
  Json to_json() const;
  static DetectorConfig from_json(const Json& j);
  void validate() const;
};

struct DetectorModel {
  DetectorConfig config;
  AttentionLayerParams attention;
  Matrix cls_hidden_weight, cls_hidden_bias, cls_out_weight, cls_out_bias;
  Matrix off_hidden_weight, off_hidden_bias, off_out_weight, off_out_bias;

  static DetectorModel init(const DetectorConfig& config, std::uint64_t seed);
  ParameterPack parameters();
  ParameterPack state();
};

struct DetectorVars {
  AttentionLayerVars attention;
  Var cls_hidden_weight, cls_hidden_bias, cls_out_weight, cls_out_bias;
  Var off_hidden_weight, off_hidden_bias, off_out_weight, off_out_bias;
  std::vector<Var> flat;
};

DetectorVars bind(Tape& tape, const DetectorModel& model);

struct DetectorOutputVars {
  Var confidences;  // P x 1
  Var offsets;      // P x 2
};

// Adds positional encodings, runs one self-attention layer with
// q = k = v = patch features, then the two per-patch heads.
DetectorOutputVars detect_formation(Tape& tape, const DetectorVars& vars, DetectorModel& model, const AnchorGrid& grid,
                                    const Matrix& patch_features, const ForwardOptions& options);
VertexPrediction detect_formation(const Matrix& patch_features, const AnchorGrid& grid, DetectorModel& model,
                                  const ForwardOptions& options = {});

Var formation_loss(Tape& tape, const DetectorOutputVars& out, const VertexTargets& targets, double lambda);

// One synthetic overhead view: patch features plus ground truth.
struct FormationImage {
  Matrix patch_features;          // P x feature_dim
  std::vector<Point2> actors;
  std::vector<Point2> vertices;   // convex hull of the actors, counter-clockwise
  std::vector<bool> vertex_flags;
};

// Patch features are smooth functions of actor occupancy around each anchor.
std::vector<FormationImage> generate_formation_images(std::size_t count, const DetectorConfig& config,
                                                      std::uint64_t seed);
// Patch features for arbitrary actor positions (used for annotated samples).
Matrix formation_patch_features(const std::vector<Point2>& actors, const AnchorGrid& grid, std::size_t feature_dim,
                                std::mt19937_64& rng, double noise = 0.01);

// Mean total loss over the batch, gradient in parameters() order.
double detector_batch_loss(DetectorModel& model, std::span<const FormationImage* const> images,
                           const ForwardOptions& options, Vector* grad);

struct DetectorTrainResult {
  DetectorModel model;
  std::vector<double> loss_history;
};

DetectorTrainResult train_detector(const std::vector<FormationImage>& images, const DetectorConfig& config,
                                   const TrainConfig& train_config);

void save_detector(DetectorModel& model, const std::filesystem::path& path, const Json& metadata = Json::object());
DetectorModel load_detector(const std::filesystem::path& path, Json* metadata = nullptr);

}  // namespace goat
