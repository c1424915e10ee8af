#include "gradient_suite.hpp"

#include "goat/attention.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include <unistd.h>

using namespace goat;
using goat::testing::uniform;

namespace {

AttentionLayerParams identity_layer(Eigen::Index d) {
  return {Matrix::Identity(d, d), Matrix::Identity(d, d), BatchNormState<double>(d)};
}

Eigen::Index row_argmax(const Matrix& m, Eigen::Index r) {
  Eigen::Index best = 0;
  m.row(r).maxCoeff(&best);
  return best;
}

}  // namespace

TEST(AttentionLayer, RowsSumToOne) {
  std::mt19937_64 rng(1);
  AttentionLayerParams params = AttentionLayerParams::init(8, rng);
  const Matrix q = uniform(rng, 6, 8), v = uniform(rng, 6, 8);
  ForwardOptions train;
  train.mode = Mode::train;
  const AttentionLayerOutput out = attention_layer(q, q, v, params, 4, train);
  ASSERT_EQ(out.head_weights.size(), 4u);
  for (const Matrix& w : out.head_weights) {
    EXPECT_GE(w.minCoeff(), 0.0);
    for (Eigen::Index r = 0; r < w.rows(); ++r) EXPECT_NEAR(w.row(r).sum(), 1.0, 1e-9);
  }
}

TEST(AttentionLayer, IdenticalQueriesAreUniform) {
  std::mt19937_64 rng(2);
  AttentionLayerParams params = AttentionLayerParams::init(4, rng);
  const Matrix g = Matrix::Ones(5, 1) * uniform(rng, 1, 4);
  const AttentionLayerOutput out = attention_layer(g, g, uniform(rng, 5, 4), params, 2, {});
  EXPECT_LT((out.weights - Matrix::Constant(5, 5, 0.2)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AttentionLayer, SingleClipEval) {
  std::mt19937_64 rng(3);
  AttentionLayerParams params = AttentionLayerParams::init(4, rng);
  params.norm.running_mean = uniform(rng, 1, 4);
  params.norm.running_var = uniform(rng, 1, 4, 0.5, 2.0);
  params.norm.gamma = uniform(rng, 1, 4);
  params.norm.beta = uniform(rng, 1, 4);
  const Matrix v = uniform(rng, 1, 4);
  const AttentionLayerOutput out = attention_layer(uniform(rng, 1, 4), uniform(rng, 1, 4), v, params, 1, {});
  EXPECT_EQ(out.weights(0, 0), 1.0);
  BatchNormState<double> copy = params.norm;
  EXPECT_LT((out.value - batch_norm(Matrix(2.0 * v), copy, Mode::eval)).cwiseAbs().maxCoeff(), 1e-15);

  ForwardOptions train;
  train.mode = Mode::train;
  EXPECT_THROW(attention_layer(v, v, v, params, 1, train), std::invalid_argument);
}

TEST(AttentionLayer, HandComputedTwoClips) {
  AttentionLayerParams params = identity_layer(2);
  params.query << 1, 2, 0, 1;
  const Matrix q = Matrix::Identity(2, 2);
  const AttentionLayerOutput out = attention_layer(q, q, Matrix::Ones(2, 2), params, 1, {});
  // q' = [[1,2],[0,1]], k' = I, logits = q' / sqrt(2)
  const double s = 1.0 / std::sqrt(2.0);
  const double r0 = 1.0 / (1.0 + std::exp(s)), r1 = 1.0 / (1.0 + std::exp(s));
  EXPECT_NEAR(out.weights(0, 0), r0, 1e-15);
  EXPECT_NEAR(out.weights(0, 1), 1.0 - r0, 1e-15);
  EXPECT_NEAR(out.weights(1, 0), r1, 1e-15);
  EXPECT_NEAR(out.weights(1, 1), 1.0 - r1, 1e-15);
  EXPECT_EQ(out.query, params.query);
}

TEST(AttentionLayer, RejectsIndivisibleHeads) {
  std::mt19937_64 rng(4);
  AttentionLayerParams params = AttentionLayerParams::init(6, rng);
  const Matrix x = uniform(rng, 3, 6);
  EXPECT_THROW(attention_layer(x, x, x, params, 4, {}), std::invalid_argument);
}

TEST(AttentionLayer, ArgmaxInvariantToPositiveScaling) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    AttentionLayerParams params = identity_layer(4);
    const Matrix g = uniform(rng, 5, 4), v = uniform(rng, 5, 4);
    const Matrix base = attention_layer(g, g, v, params, 1, {}).weights;
    for (double c : {0.3, 2.0, 7.5}) {
      const Matrix scaled = attention_layer(Matrix(c * g), Matrix(c * g), v, params, 1, {}).weights;
      for (Eigen::Index r = 0; r < 5; ++r) EXPECT_EQ(row_argmax(scaled, r), row_argmax(base, r));
    }
  }
}

TEST(TemporalFuse, ZeroLayersReturnValues) {
  std::mt19937_64 rng(6);
  const Matrix g = uniform(rng, 4, 4), v = uniform(rng, 4, 4);
  Tape tape;
  std::vector<AttentionLayerParams> none;
  const FuseVars out = temporal_fuse(tape, {tape.constant(g)}, {tape.constant(v)}, {}, none, 2, {});
  EXPECT_EQ(tape.value(out.fused.front()), v);
}

TEST(TemporalFuse, IdentityAttentionGivesNormalizedDoubleValues) {
  std::mt19937_64 rng(7);
  std::vector<AttentionLayerParams> layers = {AttentionLayerParams::init(4, rng)};
  const Matrix g = uniform(rng, 5, 4), v = uniform(rng, 5, 4);
  ForwardOptions options;
  options.mode = Mode::train;
  options.identity_attention = true;
  BatchNormState<double> reference = layers[0].norm;
  Tape tape;
  std::vector<AttentionLayerVars> vars = {bind(tape, layers[0])};
  const FuseVars out = temporal_fuse(tape, {tape.constant(g)}, {tape.constant(v)}, vars, layers, 4, options);
  EXPECT_LT((tape.value(out.fused.front()) - batch_norm(Matrix(2.0 * v), reference, Mode::train)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(tape.value(out.head_weights[0][0][0]), Matrix(Matrix::Identity(5, 5)));
}

TEST(TemporalFuse, ClipPermutationEquivariantWithoutBatchNorm) {
  std::mt19937_64 rng(8);
  std::vector<AttentionLayerParams> layers = {AttentionLayerParams::init(4, rng), AttentionLayerParams::init(4, rng)};
  const Matrix g = uniform(rng, 5, 4), v = uniform(rng, 5, 4);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  ForwardOptions options;
  options.bypass_batch_norm = true;
  auto run = [&](const Matrix& gg, const Matrix& vv) {
    Tape tape;
    std::vector<AttentionLayerVars> vars;
    for (const auto& l : layers) vars.push_back(bind(tape, l));
    return Matrix(tape.value(temporal_fuse(tape, {tape.constant(gg)}, {tape.constant(vv)}, vars, layers, 2, options).fused.front()));
  };
  const Matrix base = run(g, v);
  const Matrix permuted = run(perm * g, perm * v);
  EXPECT_LT((permuted - perm * base).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TemporalFuse, BatchStatisticsSpanVideos) {
  std::mt19937_64 rng(9);
  std::vector<AttentionLayerParams> layers = {AttentionLayerParams::init(4, rng)};
  const Matrix g1 = uniform(rng, 3, 4), g2 = uniform(rng, 3, 4), v1 = uniform(rng, 3, 4), v2 = uniform(rng, 3, 4);
  ForwardOptions options;
  options.mode = Mode::train;
  Tape tape;
  std::vector<AttentionLayerVars> vars = {bind(tape, layers[0])};
  const FuseVars out = temporal_fuse(tape, {tape.constant(g1), tape.constant(g2)}, {tape.constant(v1), tape.constant(v2)},
                                     vars, layers, 2, options);
  Matrix stacked(6, 4);
  stacked << tape.value(out.fused[0]), tape.value(out.fused[1]);
  const RowVector mean = stacked.colwise().mean();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Trace, SalienceIsColumnMean) {
  AttentionTrace uniform_trace;
  uniform_trace.layers = {Matrix::Constant(2, 2, 0.5)};
  EXPECT_EQ(uniform_trace.salience(), RowVector::Constant(2, 0.5));

  AttentionTrace identity;
  identity.layers = {Matrix::Identity(4, 4), Matrix::Identity(4, 4)};
  EXPECT_EQ(identity.salience(), RowVector::Constant(4, 0.25));
}

TEST(Trace, ExportRoundTrip) {
  std::mt19937_64 rng(10);
  AttentionTrace trace;
  for (int l = 0; l < 2; ++l) {
    Matrix w = uniform(rng, 5, 5, 0.0, 1.0);
    for (Eigen::Index r = 0; r < 5; ++r) w.row(r) /= w.row(r).sum();
    trace.layers.push_back(w);
  }
  const std::vector<bool> mask = {true, false, false, true, false};
  const auto path = std::filesystem::temp_directory_path() / ("goat_attn_" + std::to_string(::getpid()) + ".csv");
  export_attention(trace, path, {"run=test"}, mask);
  const ParsedAttention parsed = parse_attention_csv(path);
  ASSERT_EQ(parsed.salience.size(), 5u);
  EXPECT_EQ(parsed.element_mask, mask);
  ASSERT_EQ(parsed.layers.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) EXPECT_LT((parsed.layers[l] - trace.layers[l]).cwiseAbs().maxCoeff(), 1e-15);
  const RowVector s = trace.salience();
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_LT(std::abs(parsed.salience[static_cast<std::size_t>(i)] - s[i]), 1e-15);
  EXPECT_THROW(export_attention(trace, path, {}, {true, false}), std::invalid_argument);
  std::filesystem::remove(path);
}
