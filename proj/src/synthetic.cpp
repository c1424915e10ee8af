#include "goat/synthetic.hpp"

#include "goat/errors.hpp"
#include "goat/random.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <numeric>

namespace goat {

namespace {

// Unit-norm direction with Gaussian entries.
Vector random_direction(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v / v.norm();
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

constexpr ActionLabel kElementLabels[] = {ActionLabel::required_1, ActionLabel::required_2, ActionLabel::required_3,
                                          ActionLabel::required_4, ActionLabel::required_5, ActionLabel::upper,
                                          ActionLabel::lower,      ActionLabel::float_};
constexpr ActionLabel kOtherLabels[] = {ActionLabel::none, ActionLabel::acrobatic, ActionLabel::cadence};

}  // namespace

std::size_t element_clip_count(std::size_t clips) { return (clips + 3) / 4; }

void validate(const SyntheticConfig& c) {
  if (c.clips < 4) throw InvalidArgument("synthetic: T must be >= 4");
  if (c.actors < 2) throw InvalidArgument("synthetic: N must be >= 2");
  if (c.feature_dim < 4) throw InvalidArgument("synthetic: d must be >= 4");
  if (c.samples < 8) throw InvalidArgument("synthetic: K must be >= 8");
  if (!(c.score_max > c.score_min)) throw InvalidArgument("synthetic: score_max must exceed score_min");
  if (c.feature_noise < 0 || c.position_noise < 0 || c.background_noise < 0) throw InvalidArgument("synthetic: noise must be >= 0");
  if (c.frames_per_clip < 1) throw InvalidArgument("synthetic: frames_per_clip must be >= 1");
  if (c.fixed_quality && (*c.fixed_quality < 0.0 || *c.fixed_quality > 1.0)) {
    throw InvalidArgument("synthetic: fixed_quality must lie in [0,1]");
  }
}

std::vector<SyntheticSample> generate_synthetic_dataset(const SyntheticConfig& c) {
  validate(c);
  const std::size_t t_count = c.clips, n = c.actors, d = c.feature_dim;
  auto basis = substream(c.seed, "generator.basis");
  const Vector quality_dir = random_direction(basis, d);
  const Vector actor_quality_dir = random_direction(basis, d);
  const Vector element_look = random_direction(basis, d);
  const Vector water_look = random_direction(basis, d);

  std::vector<SyntheticSample> out;
  out.reserve(c.samples);
  for (std::size_t k = 0; k < c.samples; ++k) {
    auto rng = substream(c.seed, "generator.sample", k);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    SyntheticSample ss;
    SyntheticTruth& truth = ss.truth;
    truth.quality.resize(t_count);
    for (double& q : truth.quality) q = c.fixed_quality ? *c.fixed_quality : unit(rng);

    std::vector<std::size_t> clips(t_count);
    std::iota(clips.begin(), clips.end(), std::size_t{0});
    for (std::size_t i = t_count - 1; i > 0; --i) std::swap(clips[i], clips[rng() % (i + 1)]);
    truth.element_mask.assign(t_count, false);
    for (std::size_t i = 0; i < element_clip_count(t_count); ++i) truth.element_mask[clips[i]] = true;

    double quality_sum = 0.0;
    for (std::size_t i = 0; i < t_count; ++i) {
      if (truth.element_mask[i]) quality_sum += truth.quality[i];
    }
    const double mean_quality = quality_sum / static_cast<double>(element_clip_count(t_count));
    truth.oracle_score = c.score_min + (c.score_max - c.score_min) * mean_quality;

    VideoSample& s = ss.sample;
    char id[32];
    std::snprintf(id, sizeof id, "sample_%04zu", k);
    s.id = id;
    s.score = std::clamp(truth.oracle_score, c.score_min, c.score_max);
    s.clip_features.resize(static_cast<Eigen::Index>(t_count), static_cast<Eigen::Index>(d));
    const double rotation_base = unit(rng) * 2.0 * std::numbers::pi;
    const Point2 center{0.5 + 0.05 * (unit(rng) - 0.5), 0.5 + 0.05 * (unit(rng) - 0.5)};

    for (std::size_t i = 0; i < t_count; ++i) {
      const double q = truth.quality[i];
      const bool element = truth.element_mask[i];
      for (std::size_t j = 0; j < d; ++j) {
        s.clip_features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            c.signal_strength * q * quality_dir[static_cast<Eigen::Index>(j)] +
            (element ? c.feature_noise : c.background_noise) * normal(rng);
      }

      ActorFrame frame;
      frame.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
      const Vector& look = element ? element_look : water_look;
      const double rotation = rotation_base + 0.1 * static_cast<double>(i);
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t j = 0; j < d; ++j) {
          const auto jj = static_cast<Eigen::Index>(j);
          double v = c.appearance_strength * look[jj] + c.feature_noise * normal(rng);
          if (element) v += c.signal_strength * q * actor_quality_dir[jj];
          frame.features(static_cast<Eigen::Index>(a), jj) = v;
        }
        Point2 p;
        if (element) {
          const double angle = rotation + 2.0 * std::numbers::pi * static_cast<double>(a) / static_cast<double>(n);
          const double jitter = c.position_noise * (1.0 - q);
          p = {center.x + c.polygon_radius * std::cos(angle) + jitter * normal(rng),
               center.y + c.polygon_radius * std::sin(angle) + jitter * normal(rng)};
        } else {
          p = {0.1 + 0.8 * unit(rng), 0.1 + 0.8 * unit(rng)};
        }
        frame.positions.push_back({clamp01(p.x), clamp01(p.y)});
      }

      if (element) {
        const std::vector<std::size_t> hull = convex_hull(frame.positions);
        FormationLabel label;
        label.vertex_flags.assign(n, false);
        for (std::size_t idx : hull) {
          label.vertices.push_back(frame.positions[idx]);
          label.vertex_flags[idx] = true;
        }
        if (label.vertices.size() >= 3 && is_strictly_convex(label.vertices)) {
          s.formations.push_back({i, std::move(label)});
        }
      }
      s.actor_frames.push_back(std::move(frame));

      const ActionLabel action = element ? kElementLabels[rng() % std::size(kElementLabels)]
                                         : kOtherLabels[rng() % std::size(kOtherLabels)];
      const std::size_t start = i * c.frames_per_clip, end = start + c.frames_per_clip;
      if (!s.actions.empty() && s.actions.back().label == action) {
        s.actions.back().end_frame = end;
      } else {
        s.actions.push_back({action, start, end});
      }
    }
    out.push_back(std::move(ss));
  }
  return out;
}

DatasetManifest synthetic_manifest(const SyntheticConfig& c, const std::vector<SyntheticSample>& samples) {
  DatasetManifest m;
  m.score_min = c.score_min;
  m.score_max = c.score_max;
  m.feature_dim = c.feature_dim;
  m.clip_count = c.clips;
  m.actor_count = c.actors;
  for (const auto& s : samples) m.sample_ids.push_back(s.sample.id);
  const Split split = make_split(samples.size(), c.seed);
  for (std::size_t i : split.train) m.train_ids.push_back(m.sample_ids[i]);
  for (std::size_t i : split.test) m.test_ids.push_back(m.sample_ids[i]);
  m.metadata = {{"generator", c.to_json()}};
  return m;
}

Json truth_to_json(const std::vector<SyntheticSample>& samples) {
  Json out = Json::object();
  for (const auto& s : samples) {
    std::vector<std::size_t> elements;
    for (std::size_t i = 0; i < s.truth.element_mask.size(); ++i) {
      if (s.truth.element_mask[i]) elements.push_back(i);
    }
    out[s.sample.id] = {{"oracle_score", s.truth.oracle_score},
                        {"quality", s.truth.quality},
                        {"element_clips", elements}};
  }
  return out;
}

Json SyntheticConfig::to_json() const {
  Json j = {{"clips", clips},
            {"actors", actors},
            {"feature_dim", feature_dim},
            {"samples", samples},
            {"seed", seed},
            {"score_min", score_min},
            {"score_max", score_max},
            {"feature_noise", feature_noise},
            {"background_noise", background_noise},
            {"position_noise", position_noise},
            {"signal_strength", signal_strength},
            {"appearance_strength", appearance_strength},
            {"polygon_radius", polygon_radius},
            {"frames_per_clip", frames_per_clip}};
  j["fixed_quality"] = fixed_quality ? Json(*fixed_quality) : Json(nullptr);
  return j;
}

SyntheticConfig SyntheticConfig::from_json(const Json& j) {
  SyntheticConfig c;
  c.clips = j.value("clips", c.clips);
  c.actors = j.value("actors", c.actors);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.samples = j.value("samples", c.samples);
  c.seed = j.value("seed", c.seed);
  c.score_min = j.value("score_min", c.score_min);
  c.score_max = j.value("score_max", c.score_max);
  c.feature_noise = j.value("feature_noise", c.feature_noise);
  c.background_noise = j.value("background_noise", c.background_noise);
  c.position_noise = j.value("position_noise", c.position_noise);
  c.signal_strength = j.value("signal_strength", c.signal_strength);
  c.appearance_strength = j.value("appearance_strength", c.appearance_strength);
  c.polygon_radius = j.value("polygon_radius", c.polygon_radius);
  c.frames_per_clip = j.value("frames_per_clip", c.frames_per_clip);
  if (j.contains("fixed_quality") && !j.at("fixed_quality").is_null()) c.fixed_quality = j.at("fixed_quality").get<double>();
  return c;
}

}  // namespace goat
