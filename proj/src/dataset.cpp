#include "goat/dataset.hpp"

#include "goat/errors.hpp"
#include "goat/feature_io.hpp"
#include "goat/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace goat {

namespace {

constexpr std::array<std::string_view, kActionLabelCount> kLabelNames = {
    "upper",      "lower",      "float",      "none",       "acrobatic",  "cadence",
    "required_1", "required_2", "required_3", "required_4", "required_5", "free",
};

bool in_unit_square(const Point2& p) { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; }

}  // namespace

std::string_view to_string(ActionLabel label) { return kLabelNames.at(static_cast<std::size_t>(label)); }

ActionLabel parse_action_label(std::string_view name) {
  for (std::size_t i = 0; i < kLabelNames.size(); ++i) {
    if (kLabelNames[i] == name) return static_cast<ActionLabel>(i);
  }
  throw InvalidArgument("unknown action label '" + std::string(name) + "'");
}

Split make_split(std::size_t sample_count, std::uint64_t seed) {
  if (sample_count < 4) throw InvalidArgument("split needs at least 4 samples");
  std::vector<std::size_t> order(sample_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = substream(seed, "split");
  // Fisher-Yates with our own index draw so the permutation does not depend
  // on the standard library's shuffle implementation.
  for (std::size_t i = sample_count - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  const auto train_count = static_cast<std::size_t>(std::llround(0.75 * static_cast<double>(sample_count)));
  Split split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_count));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(train_count), order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

void validate(const ActorFrame& frame) {
  if (frame.positions.empty()) throw InvalidArgument("actor frame has no actors");
  if (static_cast<std::size_t>(frame.features.rows()) != frame.positions.size()) {
    throw InvalidArgument("actor frame: feature rows and positions disagree");
  }
  for (const Point2& p : frame.positions) {
    if (!in_unit_square(p)) throw InvalidArgument("actor position outside the unit square");
  }
  if (!frame.features.allFinite()) throw InvalidArgument("actor features not finite");
}

void validate(const FormationLabel& label, std::size_t actor_count) {
  if (label.vertices.size() < 3) throw InvalidArgument("formation needs at least 3 vertices");
  if (label.vertices.size() > actor_count) throw InvalidArgument("formation has more vertices than actors");
  if (label.vertex_flags.size() != actor_count) throw InvalidArgument("formation vertex_flags length != N");
  const auto flagged = static_cast<std::size_t>(std::count(label.vertex_flags.begin(), label.vertex_flags.end(), true));
  if (flagged != label.vertices.size()) throw InvalidArgument("formation flags disagree with vertex count");
  for (const Point2& p : label.vertices) {
    if (!in_unit_square(p)) throw InvalidArgument("formation vertex outside the unit square");
  }
  if (!is_strictly_convex(label.vertices)) throw InvalidArgument("formation polygon is not convex");
}

void validate(const DatasetManifest& manifest) {
  if (!(manifest.score_max > manifest.score_min)) throw InvalidArgument("manifest: score_max must exceed score_min");
  if (manifest.train_ids.size() + manifest.test_ids.size() != manifest.sample_ids.size()) {
    throw InvalidArgument("manifest: split does not cover all samples");
  }
}

void validate(const VideoSample& sample, const DatasetManifest& manifest) {
  if (sample.clip_features.rows() == 0) throw InvalidArgument(sample.id + ": no clips");
  if (!sample.clip_features.allFinite()) throw InvalidArgument(sample.id + ": clip features not finite");
  if (sample.score < manifest.score_min || sample.score > manifest.score_max) {
    throw InvalidArgument(sample.id + ": score outside manifest range");
  }
  if (sample.has_actors()) {
    if (sample.actor_frames.size() != sample.clip_count()) throw InvalidArgument(sample.id + ": actor frames != T");
    const std::size_t n = sample.actor_frames.front().actor_count();
    for (const ActorFrame& f : sample.actor_frames) {
      validate(f);
      if (f.actor_count() != n) throw InvalidArgument(sample.id + ": actor count varies across clips");
    }
    for (const FormationAnnotation& fa : sample.formations) {
      if (fa.clip >= sample.clip_count()) throw InvalidArgument(sample.id + ": formation clip out of range");
      validate(fa.label, n);
    }
  }
  for (const ActionSegment& s : sample.actions) {
    if (s.end_frame <= s.start_frame) throw InvalidArgument(sample.id + ": empty action interval");
  }
}

Json annotation_to_json(const VideoSample& sample) {
  Json actions = Json::array();
  for (const ActionSegment& s : sample.actions) {
    actions.push_back({{"label", std::string(to_string(s.label))}, {"start_frame", s.start_frame}, {"end_frame", s.end_frame}});
  }
  Json formations = Json::array();
  for (const FormationAnnotation& fa : sample.formations) {
    Json vertices = Json::array();
    for (const Point2& p : fa.label.vertices) vertices.push_back({p.x, p.y});
    Json flags = Json::array();
    for (bool b : fa.label.vertex_flags) flags.push_back(b);
    formations.push_back({{"clip", fa.clip}, {"vertices", vertices}, {"vertex_flags", flags}});
  }
  return {{"id", sample.id}, {"score", sample.score}, {"actions", actions}, {"formations", formations}};
}

void annotation_from_json(const Json& doc, VideoSample& sample) {
  try {
    sample.id = doc.at("id").get<std::string>();
    sample.score = doc.at("score").get<double>();
    sample.actions.clear();
    for (const Json& a : doc.value("actions", Json::array())) {
      sample.actions.push_back({parse_action_label(a.at("label").get<std::string>()),
                                a.at("start_frame").get<std::size_t>(), a.at("end_frame").get<std::size_t>()});
    }
    sample.formations.clear();
    for (const Json& f : doc.value("formations", Json::array())) {
      FormationAnnotation fa;
      fa.clip = f.at("clip").get<std::size_t>();
      for (const Json& v : f.at("vertices")) fa.label.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
      for (const Json& b : f.at("vertex_flags")) fa.label.vertex_flags.push_back(b.get<bool>());
      sample.formations.push_back(std::move(fa));
    }
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("annotation: ") + e.what());
  }
}

Json manifest_to_json(const DatasetManifest& m) {
  return {{"sample_ids", m.sample_ids},
          {"score_min", m.score_min},
          {"score_max", m.score_max},
          {"split", {{"train", m.train_ids}, {"test", m.test_ids}}},
          {"feature_dim", m.feature_dim},
          {"clip_count", m.clip_count},
          {"actor_count", m.actor_count},
          {"metadata", m.metadata}};
}

DatasetManifest manifest_from_json(const Json& doc) {
  DatasetManifest m;
  try {
    m.sample_ids = doc.at("sample_ids").get<std::vector<std::string>>();
    m.score_min = doc.at("score_min").get<double>();
    m.score_max = doc.at("score_max").get<double>();
    m.train_ids = doc.at("split").at("train").get<std::vector<std::string>>();
    m.test_ids = doc.at("split").at("test").get<std::vector<std::string>>();
    m.feature_dim = doc.at("feature_dim").get<std::size_t>();
    m.clip_count = doc.at("clip_count").get<std::size_t>();
    m.actor_count = doc.at("actor_count").get<std::size_t>();
    m.metadata = doc.value("metadata", Json::object());
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("manifest: ") + e.what());
  }
  validate(m);
  return m;
}

std::vector<ActionLabel> frame_labels(const std::vector<ActionSegment>& actions, std::size_t frame_count) {
  std::vector<ActionLabel> out(frame_count, ActionLabel::none);
  for (const ActionSegment& s : actions) {
    for (std::size_t f = s.start_frame; f < std::min(s.end_frame, frame_count); ++f) out[f] = s.label;
  }
  return out;
}

namespace {

Matrix stack_actor_features(const VideoSample& s) {
  const auto n = static_cast<Eigen::Index>(s.actor_frames.front().actor_count());
  const Eigen::Index d = s.actor_frames.front().features.cols();
  Matrix out(static_cast<Eigen::Index>(s.actor_frames.size()) * n, d);
  for (std::size_t t = 0; t < s.actor_frames.size(); ++t) {
    out.middleRows(static_cast<Eigen::Index>(t) * n, n) = s.actor_frames[t].features;
  }
  return out;
}

Matrix stack_positions(const VideoSample& s) {
  const auto n = static_cast<Eigen::Index>(s.actor_frames.front().actor_count());
  Matrix out(static_cast<Eigen::Index>(s.actor_frames.size()) * n, 2);
  for (std::size_t t = 0; t < s.actor_frames.size(); ++t) {
    for (Eigen::Index a = 0; a < n; ++a) {
      out(static_cast<Eigen::Index>(t) * n + a, 0) = s.actor_frames[t].positions[a].x;
      out(static_cast<Eigen::Index>(t) * n + a, 1) = s.actor_frames[t].positions[a].y;
    }
  }
  return out;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace

void save_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest,
                  const std::vector<VideoSample>& samples) {
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"features", "actors", "positions", "annotations"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw IoError("cannot create " + (dir / sub).string() + ": " + ec.message());
  }
  write_file(dir / "manifest.json", dump(manifest_to_json(manifest)));
  for (const VideoSample& s : samples) {
    save_features(s.clip_features, dir / "features" / (s.id + ".logf"));
    if (s.has_actors()) {
      save_features(stack_actor_features(s), dir / "actors" / (s.id + ".logf"));
      save_features(stack_positions(s), dir / "positions" / (s.id + ".logf"));
    }
    write_file(dir / "annotations" / (s.id + ".json"), dump(annotation_to_json(s)));
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir / "manifest.json")) throw IoError("no dataset at " + dir.string() + " (manifest.json missing)");
  Dataset ds;
  try {
    ds.manifest = manifest_from_json(Json::parse(read_file(dir / "manifest.json")));
  } catch (const Json::parse_error& e) {
    throw InvalidArgument(std::string("manifest.json: ") + e.what());
  }
  for (const std::string& id : ds.manifest.sample_ids) {
    VideoSample s;
    try {
      annotation_from_json(Json::parse(read_file(dir / "annotations" / (id + ".json"))), s);
    } catch (const Json::parse_error& e) {
      throw InvalidArgument(id + ".json: " + e.what());
    }
    s.id = id;
    s.clip_features = load_features(dir / "features" / (id + ".logf"));
    const fs::path actors = dir / "actors" / (id + ".logf");
    if (fs::exists(actors)) {
      const Matrix feats = load_features(actors);
      const Matrix pos = load_features(dir / "positions" / (id + ".logf"));
      const Eigen::Index t = s.clip_features.rows();
      if (t == 0 || feats.rows() % t != 0 || pos.rows() != feats.rows() || pos.cols() != 2) {
        throw InvalidArgument(id + ": actor files do not match clip count");
      }
      const Eigen::Index n = feats.rows() / t;
      for (Eigen::Index c = 0; c < t; ++c) {
        ActorFrame f;
        f.features = feats.middleRows(c * n, n);
        for (Eigen::Index a = 0; a < n; ++a) f.positions.push_back({pos(c * n + a, 0), pos(c * n + a, 1)});
        s.actor_frames.push_back(std::move(f));
      }
    }
    validate(s, ds.manifest);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<VideoSample> Dataset::subset(const std::vector<std::string>& ids) const {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < samples.size(); ++i) index.emplace(samples[i].id, i);
  std::vector<VideoSample> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw InvalidArgument("unknown sample id " + id);
    out.push_back(samples[it->second]);
  }
  return out;
}

}  // namespace goat
