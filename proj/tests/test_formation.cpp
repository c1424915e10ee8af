#include "gradient_suite.hpp"

#include "goat/errors.hpp"
#include "goat/formation.hpp"
#include "goat/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include <unistd.h>

using namespace goat;
using goat::testing::uniform;

namespace {

VertexPrediction perfect_prediction(const VertexTargets& t) {
  return {t.presence, t.offsets};
}

DetectorConfig small_detector() {
  DetectorConfig c;
  c.grid_side = 4;
  c.feature_dim = 8;
  c.hidden = 6;
  return c;
}

}  // namespace

TEST(AnchorGrid, PatchCountAndAnchors) {
  EXPECT_EQ(AnchorGrid(32).patch_count(), 1024u);
  const AnchorGrid g(2);
  EXPECT_EQ(g.anchor(0), (Point2{0.25, 0.25}));
  EXPECT_EQ(g.anchor(1), (Point2{0.75, 0.25}));
  EXPECT_EQ(g.anchor(2), (Point2{0.25, 0.75}));
  EXPECT_EQ(g.anchor(3), (Point2{0.75, 0.75}));
  EXPECT_THROW(AnchorGrid(1), InvalidArgument);
}

TEST(AnchorGrid, FloorIndexing) {
  for (std::size_t s : {2u, 16u, 32u}) {
    const AnchorGrid g(s);
    EXPECT_EQ(g.patch_of({0.999, 0.001}), s - 1);
    EXPECT_EQ(g.patch_of({1.0, 1.0}), s * s - 1);
    for (std::size_t p = 0; p < g.patch_count(); ++p) EXPECT_EQ(g.patch_of(g.anchor(p)), p);
  }
}

TEST(PositionalEncoding, OriginIsSinZeroCosOne) {
  const RowVector pe = positional_encoding({0.0, 0.0}, 16);
  for (Eigen::Index j = 0; j < 16; j += 2) {
    EXPECT_EQ(pe[j], 0.0);
    EXPECT_EQ(pe[j + 1], 1.0);
  }
  EXPECT_THROW(positional_encoding({0.0, 0.0}, 6), InvalidArgument);
}

TEST(PositionalEncoding, ChannelFormula) {
  const RowVector pe = positional_encoding({0.3, 0.7}, 8, 2.0);
  // half = 4 channels per axis, pairs j = 0, 1
  for (int j = 0; j < 2; ++j) {
    const double freq = 1.0 / std::pow(10000.0, 2.0 * j / 4.0);
    EXPECT_NEAR(pe[2 * j], std::sin(0.6 * freq), 1e-15);
    EXPECT_NEAR(pe[2 * j + 1], std::cos(0.6 * freq), 1e-15);
    EXPECT_NEAR(pe[4 + 2 * j], std::sin(1.4 * freq), 1e-15);
    EXPECT_NEAR(pe[4 + 2 * j + 1], std::cos(1.4 * freq), 1e-15);
  }
}

TEST(PositionalEncoding, RangeOnRandomAnchors) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const RowVector pe = positional_encoding({u(rng), u(rng)}, 32, 32.0);
    EXPECT_LE(pe.cwiseAbs().maxCoeff(), 1.0);
  }
}

TEST(PositionalEncoding, GridAnchorsAreDistinct) {
  const AnchorGrid g(32);
  const Matrix pe = grid_positional_encoding(g, 64);
  Matrix raw(1024, 64);
  for (std::size_t p = 0; p < 1024; ++p) raw.row(static_cast<Eigen::Index>(p)) = positional_encoding(g.anchor(p), 64);
  for (const Matrix* m : std::initializer_list<const Matrix*>{&pe, &raw}) {
    double closest = 1e300;
    for (Eigen::Index i = 0; i < 1024; ++i) {
      for (Eigen::Index j = i + 1; j < 1024; ++j) closest = std::min(closest, (m->row(i) - m->row(j)).squaredNorm());
    }
    EXPECT_GT(closest, 0.0);
  }
}

TEST(Targets, OffsetsInPatchUnits) {
  const AnchorGrid g(4);
  const VertexTargets t = build_targets({{0.1, 0.2}, {0.8, 0.3}}, g);
  EXPECT_EQ(t.presence.sum(), 2.0);
  EXPECT_EQ(t.presence[g.patch_of({0.1, 0.2})], 1.0);
  const auto p = static_cast<Eigen::Index>(g.patch_of({0.1, 0.2}));
  EXPECT_NEAR(t.offsets(p, 0), (0.1 - 0.125) / 0.25, 1e-15);
  EXPECT_NEAR(t.offsets(p, 1), (0.2 - 0.125) / 0.25, 1e-15);
  EXPECT_LE(t.offsets.cwiseAbs().maxCoeff(), 0.5);
  EXPECT_THROW(build_targets({{0.1, 0.1}, {0.12, 0.12}}, g), InvalidArgument);
}

TEST(Loss, UniformConfidenceGivesLogTwoPerPatch) {
  const AnchorGrid g(32);
  const VertexTargets t = build_targets({{0.1, 0.1}, {0.9, 0.5}, {0.4, 0.8}}, g);
  VertexPrediction pred{Vector::Constant(1024, 0.5), Matrix::Zero(1024, 2)};
  const FormationLoss l = formation_loss(pred, t);
  EXPECT_NEAR(l.bce, 1024.0 * std::log(2.0), 1e-9);
  EXPECT_NEAR(l.bce, 709.78, 0.01);
}

TEST(Loss, OffsetErrorOverPositives) {
  const AnchorGrid g(2);
  const VertexTargets t = build_targets({{0.3, 0.3}}, g);
  VertexPrediction pred = perfect_prediction(t);
  pred.offsets(0, 0) += 0.3;
  pred.offsets(0, 1) += 0.4;
  pred.offsets(3, 0) = 5.0;  // negative patch, ignored
  const FormationLoss l = formation_loss(pred, t, 2.0);
  EXPECT_NEAR(l.mse, 0.25, 1e-15);
  EXPECT_NEAR(l.total, l.bce + 0.5, 1e-15);
}

TEST(Loss, OptimumIsNearZero) {
  const AnchorGrid g(32);
  const VertexTargets t = build_targets({{0.1, 0.1}, {0.9, 0.5}, {0.4, 0.8}}, g);
  const FormationLoss l = formation_loss(perfect_prediction(t), t);
  EXPECT_LE(l.bce, 1024 * 1e-6);
  EXPECT_LE(l.mse, 1024 * 1e-6);
  EXPECT_GE(l.bce, 0.0);
}

TEST(Decode, Examples) {
  const AnchorGrid g(2);
  VertexPrediction pred{Vector::Constant(4, 0.2), Matrix::Zero(4, 2)};
  EXPECT_TRUE(decode_vertices(pred, g, 0.5).empty());
  pred.confidences[2] = 0.9;
  auto v = decode_vertices(pred, g, 0.5);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].x, 0.25);
  EXPECT_EQ(v[0].y, 0.75);
  pred.confidences[0] = 0.7;
  pred.offsets.row(0) << 0.5, 0.5;
  v = decode_vertices(pred, g, 0.5);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].confidence, 0.9);
  EXPECT_EQ(v[1].x, 0.5);
  EXPECT_EQ(v[1].y, 0.5);
  pred.offsets.row(0) << -3.0, 0.0;
  EXPECT_EQ(decode_vertices(pred, g, 0.5)[1].x, 0.0);
}

TEST(Decode, CountMatchesThreshold) {
  std::mt19937_64 rng(2);
  const AnchorGrid g(8);
  for (int trial = 0; trial < 20; ++trial) {
    VertexPrediction pred{Vector(uniform(rng, 64, 1, 0.0, 1.0)), uniform(rng, 64, 2)};
    const double tau = 0.1 + 0.04 * trial;
    const auto v = decode_vertices(pred, g, tau);
    EXPECT_EQ(static_cast<Eigen::Index>(v.size()), (pred.confidences.array() > tau).count());
    for (std::size_t i = 1; i < v.size(); ++i) EXPECT_GE(v[i - 1].confidence, v[i].confidence);
  }
}

TEST(Decode, InvertsTargets) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t side : {4u, 16u, 32u}) {
    const AnchorGrid g(side);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Point2> truth;
      std::vector<std::size_t> used;
      while (truth.size() < 3) {
        const Point2 p{u(rng), u(rng)};
        if (std::find(used.begin(), used.end(), g.patch_of(p)) != used.end()) continue;
        used.push_back(g.patch_of(p));
        truth.push_back(p);
      }
      const auto decoded = decode_vertices(perfect_prediction(build_targets(truth, g)), g, 0.5);
      ASSERT_EQ(decoded.size(), truth.size());
      for (const Point2& p : truth) {
        const bool found = std::any_of(decoded.begin(), decoded.end(), [&](const DetectedVertex& d) {
          return std::abs(d.x - p.x) <= 1e-12 && std::abs(d.y - p.y) <= 1e-12;
        });
        EXPECT_TRUE(found);
      }
    }
  }
}

TEST(Evaluate, Examples) {
  const std::vector<Point2> truth = {{0.1, 0.1}, {0.9, 0.9}};
  DetectionScore s = evaluate_detection(truth, truth, 0.05);
  EXPECT_EQ(s.precision, 1.0);
  EXPECT_EQ(s.recall, 1.0);
  EXPECT_EQ(s.f1, 1.0);
  EXPECT_EQ(s.mean_offset_error, 0.0);

  s = evaluate_detection({}, truth, 0.05);
  EXPECT_EQ(s.precision, 1.0);
  EXPECT_EQ(s.recall, 0.0);
  EXPECT_EQ(s.f1, 0.0);

  s = evaluate_detection({{0.12, 0.1}, {0.5, 0.5}}, truth, 0.05);
  EXPECT_EQ(s.recall, 0.5);
  EXPECT_EQ(s.precision, 0.5);
  EXPECT_NEAR(s.mean_offset_error, 0.02, 1e-15);
}

TEST(Evaluate, OneToOneGreedy) {
  // Two predictions near one truth: only the closer one matches.
  const DetectionScore s = evaluate_detection({{0.5, 0.52}, {0.5, 0.51}}, {{0.5, 0.5}}, 0.1);
  EXPECT_EQ(s.matched, 1u);
  EXPECT_NEAR(s.mean_offset_error, 0.01, 1e-12);
  EXPECT_EQ(s.precision, 0.5);
}

TEST(Evaluate, AggregatePoolsCounts) {
  const DetectionScore a = evaluate_detection({{0.1, 0.1}}, {{0.1, 0.1}, {0.5, 0.5}}, 0.05);
  const DetectionScore b = evaluate_detection({{0.2, 0.2}, {0.9, 0.9}}, {{0.2, 0.2}}, 0.05);
  const DetectionScore both[] = {a, b};
  const DetectionScore agg = aggregate_detection(both);
  EXPECT_EQ(agg.matched, 2u);
  EXPECT_NEAR(agg.precision, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(agg.recall, 2.0 / 3.0, 1e-15);
}

TEST(Detector, ZeroHeads) {
  DetectorModel m = DetectorModel::init(small_detector(), 1);
  m.cls_out_weight.setZero();
  m.cls_out_bias.setZero();
  m.off_out_weight.setZero();
  m.off_out_bias.setZero();
  std::mt19937_64 rng(4);
  const AnchorGrid g(4);
  const VertexPrediction p = detect_formation(uniform(rng, 16, 8), g, m);
  EXPECT_EQ(p.confidences, Vector::Constant(16, 0.5));
  EXPECT_EQ(p.offsets, Matrix(Matrix::Zero(16, 2)));
  VertexPrediction lifted = p;
  lifted.confidences.setConstant(0.9);
  const auto v = decode_vertices(lifted, g, 0.5);
  for (const auto& d : v) EXPECT_EQ((Point2{d.x, d.y}), g.anchor(g.patch_of({d.x, d.y})));
}

TEST(Detector, PermutingPatchesWithEncodingsPermutesOutputs) {
  DetectorModel m = DetectorModel::init(small_detector(), 2);
  std::mt19937_64 rng(5);
  const AnchorGrid g(4);
  const Matrix f = uniform(rng, 16, 8);
  const Matrix pe = grid_positional_encoding(g, 8);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(16);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 16, rng);
  ForwardOptions train;
  train.mode = Mode::train;
  DetectorModel copy = m;
  const VertexPrediction base = detect_formation(f, g, m, train);
  const Matrix moved = Matrix(perm * Matrix(f + pe)) - pe;
  const VertexPrediction permuted = detect_formation(moved, g, copy, train);
  EXPECT_LT((permuted.confidences - perm * base.confidences).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((permuted.offsets - perm * base.offsets).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Detector, ConfidencesInsideUnitInterval) {
  DetectorModel m = DetectorModel::init(small_detector(), 3);
  std::mt19937_64 rng(6);
  const VertexPrediction p = detect_formation(uniform(rng, 16, 8), AnchorGrid(4), m);
  EXPECT_GT(p.confidences.minCoeff(), 0.0);
  EXPECT_LT(p.confidences.maxCoeff(), 1.0);
  EXPECT_TRUE(all_finite(p.offsets));
}

TEST(Detector, GradientCheckOnSixteenPatches) {
  const GradientCheckReport report = goat::testing::check_detector(7);
  EXPECT_LT(report.max_relative_error, 1e-4) << "index " << report.worst_index;
}

TEST(Detector, TapeLossMatchesValueLoss) {
  DetectorModel m = DetectorModel::init(small_detector(), 8);
  std::mt19937_64 rng(9);
  FormationImage img;
  img.patch_features = uniform(rng, 16, 8);
  img.vertices = {{0.1, 0.1}, {0.9, 0.2}, {0.5, 0.9}};
  const FormationImage* batch[] = {&img};
  const double on_tape = detector_batch_loss(m, batch, {}, nullptr);
  const VertexPrediction p = detect_formation(img.patch_features, AnchorGrid(4), m);
  EXPECT_NEAR(on_tape, formation_loss(p, build_targets(img.vertices, AnchorGrid(4))).total, 1e-10);
}

TEST(Images, GeneratedLabelsAreConvexHulls) {
  DetectorConfig c;
  c.grid_side = 16;
  const auto images = generate_formation_images(10, c, 3);
  ASSERT_EQ(images.size(), 10u);
  for (const auto& img : images) {
    EXPECT_EQ(img.patch_features.rows(), 256);
    EXPECT_EQ(img.patch_features.cols(), 16);
    EXPECT_EQ(img.actors.size(), 8u);
    EXPECT_GE(img.vertices.size(), 3u);
    EXPECT_TRUE(is_strictly_convex(img.vertices));
    EXPECT_NO_THROW(build_targets(img.vertices, AnchorGrid(16)));
  }
  const auto again = generate_formation_images(10, c, 3);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(again[k].patch_features, images[k].patch_features);
}

TEST(Training, ZeroLearningRateIsConstant) {
  DetectorConfig c;
  c.grid_side = 8;
  c.feature_dim = 8;
  c.hidden = 8;
  std::mt19937_64 rng(10);
  FormationImage img;
  img.patch_features = uniform(rng, 64, 8);
  img.vertices = {{0.1, 0.1}, {0.9, 0.2}, {0.5, 0.9}};
  TrainConfig tc;
  tc.epochs = 4;
  tc.learning_rate = 0.0;
  const auto r = train_detector({img}, c, tc);
  for (double l : r.loss_history) EXPECT_EQ(l, r.loss_history.front());
  tc.learning_rate = 1e-3;
  EXPECT_EQ(train_detector({img}, c, tc).loss_history, train_detector({img}, c, tc).loss_history);
}

TEST(Training, SingleImageOverfits) {
  DetectorConfig c;
  c.grid_side = 16;
  const auto images = generate_formation_images(1, c, 4);
  TrainConfig tc;
  tc.epochs = 400;
  tc.learning_rate = 0.002;
  const auto r = train_detector(images, c, tc);
  EXPECT_LT(r.loss_history.back(), 0.01 * r.loss_history.front());
  const std::size_t warmup = 50;
  for (std::size_t e = warmup + 1; e < r.loss_history.size(); ++e) EXPECT_LE(r.loss_history[e], r.loss_history[e - 1]);
}

TEST(Checkpoint, DetectorRoundTrip) {
  DetectorModel m = DetectorModel::init(small_detector(), 11);
  const auto path = std::filesystem::temp_directory_path() / ("goat_det_" + std::to_string(::getpid()) + ".ckpt");
  save_detector(m, path, {{"k", 1}});
  Json meta;
  DetectorModel back = load_detector(path, &meta);
  EXPECT_EQ(meta.at("k"), 1);
  EXPECT_EQ(back.config.to_json(), m.config.to_json());
  EXPECT_EQ(back.state().flatten(), m.state().flatten());
  std::filesystem::remove(path);
}

TEST(Config, DefaultRadiusIsPatchDiagonal) {
  DetectorConfig c;
  c.grid_side = 16;
  EXPECT_NEAR(c.radius(), std::sqrt(2.0) / 16.0, 1e-15);
  c.match_radius = 0.2;
  EXPECT_EQ(c.radius(), 0.2);
  c.feature_dim = 10;
  EXPECT_THROW(c.validate(), InvalidArgument);
}
