#include "goat/dataset.hpp"
#include "goat/errors.hpp"
#include "goat/feature_io.hpp"
#include "goat/geometry.hpp"
#include "goat/snippets.hpp"
#include "goat/synthetic.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include <unistd.h>
#include <cstring>

using namespace goat;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("goat_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

SyntheticConfig small_config() {
  SyntheticConfig c;
  c.clips = 8;
  c.actors = 4;
  c.feature_dim = 8;
  c.samples = 8;
  c.seed = 11;
  return c;
}

}  // namespace

TEST(Snippets, PaperVideoLength) { EXPECT_EQ(snippet_count(5406, 16, 10), 540u); }

TEST(Snippets, SingleWindow) { EXPECT_EQ(snippet_count(16, 16, 10), 1u); }

TEST(Snippets, TwoWindowRanges) {
  const auto ranges = split_into_snippets(26, 16, 10);
  ASSERT_EQ(ranges.size(), 2u);
  EXPECT_EQ(ranges[0], (FrameRange{0, 16}));
  EXPECT_EQ(ranges[1], (FrameRange{10, 26}));
}

TEST(Snippets, RejectsShortInput) {
  EXPECT_THROW(snippet_count(15, 16, 10), InvalidArgument);
  EXPECT_THROW(snippet_count(20, 0, 10), InvalidArgument);
  EXPECT_THROW(snippet_count(20, 16, 0), InvalidArgument);
}

TEST(Split, PaperRatio) {
  const Split s = make_split(200, 0);
  EXPECT_EQ(s.train.size(), 150u);
  EXPECT_EQ(s.test.size(), 50u);
}

TEST(Split, SmallestAndDefault) {
  EXPECT_EQ(make_split(4, 1).train.size(), 3u);
  EXPECT_EQ(make_split(4, 1).test.size(), 1u);
  EXPECT_EQ(make_split(80, 1).train.size(), 60u);
  EXPECT_EQ(make_split(8, 1).train.size(), 6u);
  EXPECT_THROW(make_split(3, 1), InvalidArgument);
}

TEST(Split, DeterministicPartition) {
  const Split a = make_split(37, 9), b = make_split(37, 9);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  for (std::size_t i : a.test) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 37u);
  EXPECT_TRUE(std::is_sorted(a.train.begin(), a.train.end()));
  EXPECT_NE(make_split(37, 10).test, a.test);
}

TEST(FeatureFile, RoundTripIsBitExact) {
  std::mt19937_64 rng(1);
  const Matrix m = random_matrix(rng, 540, 1024);
  const fs::path dir = scratch_dir("features");
  save_features(m, dir / "x.logf");
  const Matrix back = load_features(dir / "x.logf");
  ASSERT_EQ(back.rows(), 540);
  ASSERT_EQ(back.cols(), 1024);
  EXPECT_EQ(std::memcmp(back.data(), m.data(), sizeof(double) * static_cast<std::size_t>(m.size())), 0);
  fs::remove_all(dir);
}

TEST(FeatureFile, ErrorCodes) {
  std::mt19937_64 rng(2);
  const std::string good = encode_features(random_matrix(rng, 3, 4));
  auto code_of = [](const std::string& bytes) {
    try {
      decode_features(bytes);
    } catch (const FeatureFileError& e) {
      return e.code();
    }
    ADD_FAILURE() << "no error";
    return FeatureFileError::Code::io;
  };
  std::string magic = good;
  magic[0] = 'X';
  EXPECT_EQ(code_of(magic), FeatureFileError::Code::bad_magic);
  std::string version = good;
  version[4] = 2;
  EXPECT_EQ(code_of(version), FeatureFileError::Code::version_mismatch);
  EXPECT_EQ(code_of(good.substr(0, good.size() - 8)), FeatureFileError::Code::truncated);
  EXPECT_EQ(code_of(good.substr(0, 6)), FeatureFileError::Code::truncated);
  EXPECT_THROW(load_features("/nonexistent/goat/x.logf"), FeatureFileError);
}

TEST(Labels, LexiconRoundTrip) {
  for (std::size_t i = 0; i < kActionLabelCount; ++i) {
    const auto label = static_cast<ActionLabel>(i);
    EXPECT_EQ(parse_action_label(to_string(label)), label);
  }
  EXPECT_THROW(parse_action_label("somersault"), InvalidArgument);
}

TEST(Annotation, RoundTripAndUnknownLabel) {
  VideoSample s;
  s.id = "v1";
  s.score = 71.5;
  s.actions = {{ActionLabel::upper, 0, 10}, {ActionLabel::cadence, 10, 25}};
  s.formations.push_back({2, {{{0.1, 0.1}, {0.9, 0.1}, {0.5, 0.8}}, {true, true, true, false}}});
  const Json doc = annotation_to_json(s);
  VideoSample back;
  annotation_from_json(doc, back);
  EXPECT_EQ(back.id, "v1");
  EXPECT_EQ(back.score, 71.5);
  EXPECT_EQ(back.actions, s.actions);
  ASSERT_EQ(back.formations.size(), 1u);
  EXPECT_EQ(back.formations[0].label.vertices, s.formations[0].label.vertices);

  Json bad = doc;
  bad["actions"][0]["label"] = "backflip";
  EXPECT_THROW(annotation_from_json(bad, back), InvalidArgument);
}

TEST(Validation, FrameAndLabel) {
  ActorFrame f;
  f.features = Matrix::Zero(2, 3);
  f.positions = {{0.5, 0.5}, {1.5, 0.5}};
  EXPECT_THROW(validate(f), InvalidArgument);
  f.positions[1] = {0.2, 0.2};
  EXPECT_NO_THROW(validate(f));

  FormationLabel concave;
  concave.vertices = {{0, 0}, {1, 0}, {0.5, 0.1}, {1, 1}, {0, 1}};
  concave.vertex_flags.assign(5, true);
  EXPECT_THROW(validate(concave, 5), InvalidArgument);
  FormationLabel two;
  two.vertices = {{0, 0}, {1, 0}};
  two.vertex_flags.assign(2, true);
  EXPECT_THROW(validate(two, 2), InvalidArgument);
}

TEST(Validation, ManifestRange) {
  DatasetManifest m;
  m.score_min = 1.0;
  m.score_max = 1.0;
  EXPECT_THROW(validate(m), InvalidArgument);
}

TEST(FrameLabels, UncoveredFramesAreNone) {
  const auto labels = frame_labels({{ActionLabel::upper, 1, 3}}, 4);
  EXPECT_EQ(labels, (std::vector<ActionLabel>{ActionLabel::none, ActionLabel::upper, ActionLabel::upper, ActionLabel::none}));
}

TEST(Synthetic, ExtremeQualityHitsScoreBounds) {
  SyntheticConfig c = small_config();
  c.feature_noise = 0.0;
  c.background_noise = 0.0;
  c.position_noise = 0.0;
  c.fixed_quality = 1.0;
  for (const auto& s : generate_synthetic_dataset(c)) EXPECT_DOUBLE_EQ(s.sample.score, c.score_max);
  c.fixed_quality = 0.0;
  for (const auto& s : generate_synthetic_dataset(c)) EXPECT_DOUBLE_EQ(s.sample.score, c.score_min);
}

TEST(Synthetic, RegenerationIsIdentical) {
  const auto a = generate_synthetic_dataset(small_config());
  const auto b = generate_synthetic_dataset(small_config());
  ASSERT_EQ(a.size(), 8u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].sample.clip_features, b[k].sample.clip_features);
    EXPECT_EQ(a[k].sample.score, b[k].sample.score);
    for (std::size_t i = 0; i < a[k].sample.actor_frames.size(); ++i) {
      EXPECT_EQ(a[k].sample.actor_frames[i].features, b[k].sample.actor_frames[i].features);
      EXPECT_EQ(a[k].sample.actor_frames[i].positions, b[k].sample.actor_frames[i].positions);
    }
    EXPECT_EQ(encode_features(a[k].sample.clip_features), encode_features(b[k].sample.clip_features));
  }
}

TEST(Synthetic, OracleScoreIsMeanElementQuality) {
  for (const auto& s : generate_synthetic_dataset(small_config())) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < s.truth.quality.size(); ++i) {
      if (s.truth.element_mask[i]) {
        total += s.truth.quality[i];
        ++count;
      }
    }
    EXPECT_EQ(count, 2u);
    EXPECT_NEAR(s.truth.oracle_score, 100.0 * total / 2.0, 1e-12);
    EXPECT_EQ(s.sample.actor_frames.size(), 8u);
    for (const auto& fa : s.sample.formations) {
      EXPECT_TRUE(s.truth.element_mask[fa.clip]);
      EXPECT_TRUE(is_strictly_convex(fa.label.vertices));
    }
  }
}

TEST(Synthetic, RejectsBadConfig) {
  SyntheticConfig c = small_config();
  c.clips = 3;
  EXPECT_THROW(generate_synthetic_dataset(c), InvalidArgument);
  c = small_config();
  c.samples = 7;
  EXPECT_THROW(generate_synthetic_dataset(c), InvalidArgument);
  c = small_config();
  c.score_max = c.score_min;
  EXPECT_THROW(generate_synthetic_dataset(c), InvalidArgument);
}

TEST(Synthetic, ConfigJsonRoundTrip) {
  SyntheticConfig c = small_config();
  c.fixed_quality = 0.25;
  c.background_noise = 0.7;
  const SyntheticConfig back = SyntheticConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(DatasetDir, SaveLoadRoundTrip) {
  const SyntheticConfig c = small_config();
  const auto generated = generate_synthetic_dataset(c);
  std::vector<VideoSample> samples;
  for (const auto& s : generated) samples.push_back(s.sample);
  const DatasetManifest manifest = synthetic_manifest(c, generated);
  EXPECT_EQ(manifest.train_ids.size(), 6u);
  EXPECT_EQ(manifest.test_ids.size(), 2u);
  const fs::path dir = scratch_dir("dataset");
  save_dataset(dir, manifest, samples);
  const Dataset ds = load_dataset(dir);
  ASSERT_EQ(ds.samples.size(), samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    EXPECT_EQ(ds.samples[k].id, samples[k].id);
    EXPECT_EQ(ds.samples[k].score, samples[k].score);
    EXPECT_EQ(ds.samples[k].clip_features, samples[k].clip_features);
    EXPECT_EQ(ds.samples[k].actions, samples[k].actions);
    ASSERT_EQ(ds.samples[k].actor_frames.size(), samples[k].actor_frames.size());
    EXPECT_EQ(ds.samples[k].actor_frames[3].positions, samples[k].actor_frames[3].positions);
  }
  EXPECT_EQ(ds.subset(manifest.test_ids).size(), 2u);
  EXPECT_THROW(load_dataset(dir / "missing"), IoError);
  fs::remove_all(dir);
}

TEST(Geometry, HullAndConvexity) {
  const std::vector<Point2> pts = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
  const auto hull = convex_hull(pts);
  EXPECT_EQ(hull.size(), 4u);
  EXPECT_EQ(std::count(hull.begin(), hull.end(), 4u), 0);
  std::vector<Point2> poly;
  for (std::size_t i : hull) poly.push_back(pts[i]);
  EXPECT_TRUE(is_strictly_convex(poly));
  EXPECT_FALSE(is_strictly_convex({{0, 0}, {1, 0}, {2, 0}}));
}
