#pragma once

#include "goat/dataset.hpp"
#include "goat/tape.hpp"

#include <random>
#include <vector>

namespace goat {

enum class Activation { relu, identity };

struct GroupGraphConfig {
  double distance_threshold = 0.3;  // mu, normalized image units
  std::size_t layers = 1;
  Activation activation = Activation::relu;
};

// Learnable weights: the two affinity embeddings and one d x d matrix per
// GCN layer.
struct GroupGraphParams {
  Matrix embed_query;  // d x d_e
  Matrix embed_key;    // d x d_e
  std::vector<Matrix> gcn;

  static GroupGraphParams init(std::size_t feature_dim, const GroupGraphConfig& config, std::mt19937_64& rng);
};

struct RelationGraph {
  Matrix adjacency;       // N x N, row-stochastic
  Matrix node_features;   // N x d

  std::size_t size() const { return static_cast<std::size_t>(adjacency.rows()); }
};

// keep(i, j) iff |p_i - p_j| <= mu or i == j.
BoolMatrix distance_mask(const std::vector<Point2>& positions, double mu);

// A = masked row softmax of <phi(f_i), psi(f_j)> / sqrt(d_e).
RelationGraph build_relation_graph(const ActorFrame& frame, double mu, const Matrix& embed_query,
                                   const Matrix& embed_key);

// sigma(A H W).
Matrix gcn_layer(const Matrix& features, const Matrix& adjacency, const Matrix& weight,
                 Activation activation = Activation::relu);

// g = mean over actors of (G + GCN^L(G)).
RowVector group_embedding(const ActorFrame& frame, const GroupGraphParams& params, const GroupGraphConfig& config);

// One group embedding per clip, stacked T x d.
Matrix group_embedding_sequence(const std::vector<ActorFrame>& frames, const GroupGraphParams& params,
                                const GroupGraphConfig& config);

// Differentiable counterparts.
struct GroupGraphVars {
  Var embed_query;
  Var embed_key;
  std::vector<Var> gcn;
};

GroupGraphVars bind(Tape& tape, const GroupGraphParams& params);
Var relation_adjacency(Tape& tape, Var features, const BoolMatrix& keep, const GroupGraphVars& vars);
Var group_embedding(Tape& tape, const ActorFrame& frame, const GroupGraphVars& vars, const GroupGraphConfig& config);
Var group_embedding_sequence(Tape& tape, const std::vector<ActorFrame>& frames, const GroupGraphVars& vars,
                             const GroupGraphConfig& config);

}  // namespace goat
