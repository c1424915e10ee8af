#include "goat/group_graph.hpp"

#include "goat/errors.hpp"

#include <cmath>

namespace goat {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Matrix activate(const Matrix& x, Activation activation) {
  return activation == Activation::relu ? relu(x) : x;
}

Var activate(Tape& tape, Var x, Activation activation) {
  return activation == Activation::relu ? tape.relu(x) : x;
}

}  // namespace

GroupGraphParams GroupGraphParams::init(std::size_t feature_dim, const GroupGraphConfig& config,
                                        std::mt19937_64& rng) {
  const auto d = static_cast<Eigen::Index>(feature_dim);
  const double s = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  GroupGraphParams p;
  p.embed_query = gaussian(d, d, s, rng);
  p.embed_key = gaussian(d, d, s, rng);
  for (std::size_t l = 0; l < config.layers; ++l) p.gcn.push_back(gaussian(d, d, s, rng));
  return p;
}

BoolMatrix distance_mask(const std::vector<Point2>& positions, double mu) {
  if (!(mu > 0.0)) throw InvalidArgument("distance threshold must be > 0");
  const auto n = static_cast<Eigen::Index>(positions.size());
  BoolMatrix keep(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dx = positions[i].x - positions[j].x, dy = positions[i].y - positions[j].y;
      keep(i, j) = i == j || std::sqrt(dx * dx + dy * dy) <= mu;
    }
  }
  return keep;
}

RelationGraph build_relation_graph(const ActorFrame& frame, double mu, const Matrix& embed_query,
                                   const Matrix& embed_key) {
  validate(frame);
  const BoolMatrix keep = distance_mask(frame.positions, mu);
  const Matrix q = frame.features * embed_query;
  const Matrix k = frame.features * embed_key;
  const Matrix logits = (q * k.transpose()) / std::sqrt(static_cast<double>(embed_query.cols()));
  return {softmax_rows_masked(logits, keep), frame.features};
}

Matrix gcn_layer(const Matrix& features, const Matrix& adjacency, const Matrix& weight, Activation activation) {
  if (adjacency.rows() != adjacency.cols() || adjacency.cols() != features.rows() || features.cols() != weight.rows()) {
    throw InvalidArgument("gcn_layer: shape mismatch");
  }
  return activate(adjacency * features * weight, activation);
}

RowVector group_embedding(const ActorFrame& frame, const GroupGraphParams& params, const GroupGraphConfig& config) {
  const RelationGraph graph = build_relation_graph(frame, config.distance_threshold, params.embed_query, params.embed_key);
  Matrix h = graph.node_features;
  for (const Matrix& w : params.gcn) h = gcn_layer(h, graph.adjacency, w, config.activation);
  return (graph.node_features + h).colwise().mean();
}

Matrix group_embedding_sequence(const std::vector<ActorFrame>& frames, const GroupGraphParams& params,
                                const GroupGraphConfig& config) {
  if (frames.empty()) throw InvalidArgument("group embeddings need at least one actor frame");
  Matrix out(static_cast<Eigen::Index>(frames.size()), frames.front().features.cols());
  for (std::size_t t = 0; t < frames.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = group_embedding(frames[t], params, config);
  return out;
}

GroupGraphVars bind(Tape& tape, const GroupGraphParams& params) {
  GroupGraphVars v{tape.parameter(params.embed_query), tape.parameter(params.embed_key), {}};
  for (const Matrix& w : params.gcn) v.gcn.push_back(tape.parameter(w));
  return v;
}

Var relation_adjacency(Tape& tape, Var features, const BoolMatrix& keep, const GroupGraphVars& vars) {
  const Var q = tape.matmul(features, vars.embed_query);
  const Var k = tape.matmul(features, vars.embed_key);
  const double scale = 1.0 / std::sqrt(static_cast<double>(tape.value(vars.embed_query).cols()));
  return tape.softmax_rows(tape.scale(tape.matmul_nt(q, k), scale), keep);
}

Var group_embedding(Tape& tape, const ActorFrame& frame, const GroupGraphVars& vars, const GroupGraphConfig& config) {
  validate(frame);
  const BoolMatrix keep = distance_mask(frame.positions, config.distance_threshold);
  const Var g = tape.constant(frame.features);
  const Var adjacency = relation_adjacency(tape, g, keep, vars);
  Var h = g;
  for (Var w : vars.gcn) h = activate(tape, tape.matmul(tape.matmul(adjacency, h), w), config.activation);
  return tape.mean_rows(tape.add(g, h));
}

Var group_embedding_sequence(Tape& tape, const std::vector<ActorFrame>& frames, const GroupGraphVars& vars,
                             const GroupGraphConfig& config) {
  if (frames.empty()) throw InvalidArgument("group embeddings need at least one actor frame");
  std::vector<Var> rows;
  rows.reserve(frames.size());
  for (const ActorFrame& f : frames) rows.push_back(group_embedding(tape, f, vars, config));
  return tape.concat_rows(rows);
}

}  // namespace goat
