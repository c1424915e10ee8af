#pragma once

#include "goat/batch_norm.hpp"
#include "goat/tape.hpp"

#include <filesystem>
#include <random>
#include <vector>

namespace goat {

// Weights of one temporal-fusion attention layer. The batch-norm state owns
// the learnable scale/shift as well as the running statistics.
struct AttentionLayerParams {
  Matrix query;  // d x d
  Matrix key;    // d x d
  BatchNormState<double> norm;

  static AttentionLayerParams init(std::size_t width, std::mt19937_64& rng);
};

struct ForwardOptions {
  Mode mode = Mode::eval;
  // Diagnostics: replace every attention matrix by the identity, and/or
  // replace batch norm by its affine part gamma * x + beta.
  bool identity_attention = false;
  bool bypass_batch_norm = false;
};

// Attention matrices of one forward pass.
struct AttentionTrace {
  std::vector<std::vector<Matrix>> heads;  // [layer][head], T x T
  std::vector<Matrix> layers;              // head average per layer

  // Column means of the last layer: how much attention each clip receives.
  RowVector salience() const;
};

// Tape handles for one layer's weights.
struct AttentionLayerVars {
  Var query;
  Var key;
  Var gamma;
  Var beta;
};

AttentionLayerVars bind(Tape& tape, const AttentionLayerParams& params);

// First half of a layer: q' = q W_Q, k' = k W_K, per-head
// W = softmax(q'_h k'_h^T / sqrt(d_h)), r = concat_h(W_h v_h) + v.
struct AttentionMix {
  Var query;
  Var key;
  Var residual;
  std::vector<Var> head_weights;
};

AttentionMix attention_mix(Tape& tape, Var query, Var key, Var value, const AttentionLayerVars& vars,
                           std::size_t heads, const ForwardOptions& options);

// Second half: batch norm over the rows of all residuals stacked together
// (one entry per video), returned split back per video.
std::vector<Var> normalize_residuals(Tape& tape, const std::vector<Var>& residuals, const AttentionLayerVars& vars,
                                     BatchNormState<double>& state, const ForwardOptions& options);

// One full layer on a single video: v' = BN(W_attn v + v).
struct AttentionLayerOutput {
  Matrix query;
  Matrix key;
  Matrix value;
  std::vector<Matrix> head_weights;
  Matrix weights;  // head average
};

AttentionLayerOutput attention_layer(const Matrix& query, const Matrix& key, const Matrix& value,
                                     AttentionLayerParams& params, std::size_t heads, const ForwardOptions& options);

// Multi-video temporal fusion on a tape: q0 = k0 = group embeddings,
// v0 = values, L layers threaded through. Returns the fused values per video.
struct FuseVars {
  std::vector<Var> fused;
  std::vector<std::vector<std::vector<Var>>> head_weights;  // [video][layer][head]
};

FuseVars temporal_fuse(Tape& tape, const std::vector<Var>& group, const std::vector<Var>& values,
                       const std::vector<AttentionLayerVars>& layer_vars, std::vector<AttentionLayerParams>& layers,
                       std::size_t heads, const ForwardOptions& options);

AttentionTrace collect_trace(const Tape& tape, const std::vector<std::vector<Var>>& head_weights);

// CSV with two record kinds, values printed with 17 significant digits:
//   salience,<clip>,<value>[,<element 0|1>]
//   weight,<layer>,<row>,<col>,<value>
// Lines starting with '#' are metadata.
void export_attention(const AttentionTrace& trace, const std::filesystem::path& path,
                      const std::vector<std::string>& metadata = {},
                      const std::vector<bool>& element_mask = {});
struct ParsedAttention {
  std::vector<double> salience;
  std::vector<bool> element_mask;  // empty when not exported
  std::vector<Matrix> layers;
};
ParsedAttention parse_attention_csv(const std::filesystem::path& path);

}  // namespace goat
