#pragma once

#include "goat/attention.hpp"
#include "goat/dataset.hpp"
#include "goat/gradcheck.hpp"
#include "goat/group_graph.hpp"
#include "goat/train_config.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace goat {

enum class Variant { baseline, goat };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

struct GoatConfig {
  Variant variant = Variant::goat;
  std::size_t group_dim = 64;  // actor feature width; also the attention width
  std::size_t value_dim = 64;  // clip feature width
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t hidden = 32;
  GroupGraphConfig graph;

  Json to_json() const;
  static GoatConfig from_json(const Json& j);
  void validate() const;
};

// Score regressor. The baseline variant holds only the head, fed by the
// average-pooled clip features. The goat variant adds the relation-graph
// weights, an optional value projection (when value_dim != group_dim) and
// the attention layers; its head reads the average of the fused features.
struct GoatModel {
  GoatConfig config;
  GroupGraphParams graph;
  std::optional<Matrix> value_projection;  // value_dim x group_dim
  std::vector<AttentionLayerParams> layers;
  Matrix head_hidden_weight;  // in x hidden
  Matrix head_hidden_bias;    // 1 x hidden
  Matrix head_out_weight;     // hidden x 1
  Matrix head_out_bias;       // 1 x 1

  static GoatModel init(const GoatConfig& config, std::uint64_t seed);

  std::size_t head_input_dim() const;
  // Learnable weights in a fixed order (running statistics excluded).
  ParameterPack parameters();
  // Everything serialized: parameters() plus running statistics.
  ParameterPack state();
};

// Tape handles for a model, in parameters() order.
struct ModelVars {
  std::optional<GroupGraphVars> graph;
  std::optional<Var> value_projection;
  std::vector<AttentionLayerVars> layers;
  Var head_hidden_weight, head_hidden_bias, head_out_weight, head_out_bias;
  std::vector<Var> flat;
};

ModelVars bind(Tape& tape, const GoatModel& model);

struct BatchForward {
  std::vector<Var> predictions;  // 1x1 each, normalized score in (0,1)
  std::vector<std::vector<std::vector<Var>>> head_weights;
};

// Forward pass for a batch of videos. Batch norm in train mode normalizes
// over all clips of the batch.
BatchForward forward_batch(Tape& tape, const ModelVars& vars, GoatModel& model,
                           std::span<const VideoSample* const> samples, const ForwardOptions& options);

struct ScoreRange {
  double min = 0.0;
  double max = 1.0;
  double normalize(double s) const { return (s - min) / (max - min); }
  double denormalize(double u) const { return min + u * (max - min); }
};

// Mean squared error between predictions and normalized scores, with the
// gradient in parameters() order when `grad` is non-null.
double batch_loss(GoatModel& model, std::span<const VideoSample* const> samples, const ScoreRange& range,
                  const ForwardOptions& options, Vector* grad);

// Normalized prediction in (0,1) for one video, eval-mode unless overridden.
double predict_score(GoatModel& model, const VideoSample& sample, const ForwardOptions& options = {});

// Fused features and attention trace for one video (goat variant only).
struct FuseResult {
  Matrix fused;
  AttentionTrace trace;
};
FuseResult fuse_sample(GoatModel& model, const VideoSample& sample, const ForwardOptions& options = {});

struct TrainResult {
  GoatModel model;
  std::vector<double> loss_history;  // mean training loss seen in each epoch
};

// Plain gradient descent on MSE. Throws DivergenceError on a non-finite loss.
TrainResult train_model(const std::vector<VideoSample>& train, const ScoreRange& range, const GoatConfig& config,
                        const TrainConfig& train_config);
// Continues training an existing model.
std::vector<double> train_in_place(GoatModel& model, const std::vector<VideoSample>& train, const ScoreRange& range,
                                   const TrainConfig& train_config);

// Checkpoint: "GOAT" | u32 version | u32 header length | JSON header |
// f64 little-endian payload in state() order. The header carries the model
// config, tensor names and sizes, and caller metadata.
std::string encode_checkpoint(GoatModel& model, const Json& metadata = Json::object());
GoatModel decode_checkpoint(std::string_view bytes, Json* metadata = nullptr);
void save_checkpoint(GoatModel& model, const std::filesystem::path& path, const Json& metadata = Json::object());
GoatModel load_checkpoint(const std::filesystem::path& path, Json* metadata = nullptr);

}  // namespace goat
