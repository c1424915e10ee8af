#include "commands.hpp"

#include "goat/errors.hpp"
#include "goat/feature_io.hpp"
#include "goat/metrics.hpp"
#include "goat/random.hpp"
#include "parallel.hpp"

#include <cstdio>
#include <map>
#include <sstream>

namespace goat::cli {

namespace fs = std::filesystem;

namespace {

struct Metadata {
  Json run;
  std::string input_hash;

  Json to_json() const { return {{"run", run}, {"input_hash", input_hash}}; }
  std::vector<std::string> lines() const { return {"run=" + run.dump(), "input_hash=" + input_hash}; }
};

Metadata metadata_for(const RunConfig& c, const std::vector<fs::path>& inputs) {
  const Json run = c.to_json();
  return {run, content_hash(inputs, run.dump())};
}

std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_json(const fs::path& path, const Json& doc) { write_file(path, doc.dump(2) + "\n"); }

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string csv_header(const Metadata& meta) {
  std::string out;
  for (const std::string& line : meta.lines()) out += "# " + line + "\n";
  return out;
}

std::vector<std::string> split_ids(const DatasetManifest& m, const std::string& split) {
  if (split == "train") return m.train_ids;
  if (split == "test") return m.test_ids;
  return m.sample_ids;
}

// Formation-labelled views for the detector: generated images, or the
// annotated clips of a dataset with patch features built from actor positions.
struct LabeledImage {
  std::string id;
  FormationImage image;
};

std::vector<LabeledImage> labeled_images(const RunConfig& c, const DetectorConfig& dc, const std::string& split) {
  std::vector<LabeledImage> out;
  if (c.dataset.empty()) {
    const std::vector<FormationImage> images = generate_formation_images(c.images, dc, c.seed);
    const Split s = make_split(images.size(), c.seed);
    std::vector<std::size_t> picked;
    if (split == "train") {
      picked = s.train;
    } else if (split == "test") {
      picked = s.test;
    } else {
      for (std::size_t i = 0; i < images.size(); ++i) picked.push_back(i);
    }
    for (std::size_t i : picked) {
      char id[32];
      std::snprintf(id, sizeof id, "image_%04zu", i);
      out.push_back({id, images[i]});
    }
    return out;
  }
  const Dataset ds = load_dataset(c.dataset);
  const AnchorGrid grid(dc.grid_side);
  for (const VideoSample& s : ds.subset(split_ids(ds.manifest, split))) {
    for (const FormationAnnotation& f : s.formations) {
      if (!s.has_actors()) throw InvalidArgument(s.id + ": formation labels need actor positions");
      FormationImage img;
      img.actors = s.actor_frames[f.clip].positions;
      img.vertices = f.label.vertices;
      img.vertex_flags = f.label.vertex_flags;
      auto rng = substream(c.seed, "formation.features", fnv1a64(s.id) ^ f.clip);
      img.patch_features = formation_patch_features(img.actors, grid, dc.feature_dim, rng);
      out.push_back({s.id + "/clip_" + std::to_string(f.clip), std::move(img)});
    }
  }
  return out;
}

void write_loss_csv(const fs::path& path, const Metadata& meta, const std::vector<double>& history) {
  std::string out = csv_header(meta) + "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e) out += std::to_string(e) + "," + format17(history[e]) + "\n";
  write_file(path, out);
}

// id -> prediction in score units, from a CSV with "id" and "prediction" columns.
std::map<std::string, double> read_predictions(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::string> header;
  std::map<std::string, double> out;
  const auto split_line = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::size_t id_col = 0, pred_col = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> cells = split_line(line);
    if (header.empty()) {
      header = cells;
      const auto find = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw InvalidArgument(path.string() + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
      };
      id_col = find("id");
      pred_col = find("prediction");
      continue;
    }
    if (cells.size() != header.size()) throw InvalidArgument(path.string() + ": ragged row '" + line + "'");
    try {
      std::size_t used = 0;
      const double v = std::stod(cells[pred_col], &used);
      if (used != cells[pred_col].size()) throw std::invalid_argument("trailing characters");
      out[cells[id_col]] = v;
    } catch (const std::logic_error&) {
      throw InvalidArgument(path.string() + ": bad prediction '" + cells[pred_col] + "'");
    }
  }
  if (header.empty()) throw InvalidArgument(path.string() + ": empty predictions file");
  return out;
}

SegmentList to_segments(const std::vector<ActionSegment>& actions) {
  SegmentList out;
  for (const ActionSegment& a : actions) out.push_back({a.label, a.start_frame, a.end_frame});
  return out;
}

std::optional<SegmentationScores> segmentation_from_file(const fs::path& path, const std::vector<VideoSample>& samples) {
  Json doc;
  try {
    doc = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  std::vector<LabelSequence> truth, predicted;
  for (const VideoSample& s : samples) {
    if (!doc.contains(s.id)) throw InvalidArgument(path.string() + ": no segmentation for " + s.id);
    std::vector<ActionSegment> pred;
    try {
      for (const Json& seg : doc.at(s.id)) {
        pred.push_back({parse_action_label(seg.at("label").get<std::string>()), seg.at("start_frame").get<std::size_t>(),
                        seg.at("end_frame").get<std::size_t>()});
      }
    } catch (const Json::exception& e) {
      throw InvalidArgument(path.string() + ": " + s.id + ": " + e.what());
    }
    const SegmentList gt = canonicalize(to_segments(s.actions));
    const SegmentList pr = canonicalize(to_segments(pred));
    const std::size_t frames = gt.empty() ? 0 : gt.back().end;
    if (pr.empty() || pr.back().end != frames) {
      throw InvalidArgument(s.id + ": predicted segments must cover [0, " + std::to_string(frames) + ")");
    }
    truth.push_back(frame_labels(s.actions, frames));
    predicted.push_back(frame_labels(pred, frames));
  }
  return segmentation_scores(truth, predicted);
}

// Element-clip masks from the generator truth shipped with synthetic datasets.
std::map<std::string, std::vector<bool>> element_masks(const fs::path& dataset, const std::vector<VideoSample>& samples) {
  std::map<std::string, std::vector<bool>> out;
  const fs::path truth_path = dataset / "truth.json";
  if (!fs::exists(truth_path)) return out;
  Json doc;
  try {
    doc = Json::parse(read_file(truth_path)).at("samples");
  } catch (const Json::exception& e) {
    throw InvalidArgument(truth_path.string() + ": " + e.what());
  }
  for (const VideoSample& s : samples) {
    if (!doc.contains(s.id)) continue;
    std::vector<bool> mask(s.clip_count(), false);
    for (std::size_t clip : doc.at(s.id).at("element_clips").get<std::vector<std::size_t>>()) {
      if (clip >= mask.size()) throw InvalidArgument(truth_path.string() + ": element clip out of range");
      mask[clip] = true;
    }
    out[s.id] = std::move(mask);
  }
  return out;
}

}  // namespace

void cmd_generate(const RunConfig& c) {
  const Metadata meta = metadata_for(c, {});
  const SyntheticConfig sc = synthetic_config(c);
  const std::vector<SyntheticSample> synthetic = generate_synthetic_dataset(sc);
  DatasetManifest manifest = synthetic_manifest(sc, synthetic);
  manifest.metadata["run"] = meta.run;
  manifest.metadata["input_hash"] = meta.input_hash;
  std::vector<VideoSample> samples;
  samples.reserve(synthetic.size());
  for (const SyntheticSample& s : synthetic) samples.push_back(s.sample);
  const fs::path out(c.output);
  make_dir(out);
  save_dataset(out, manifest, samples);
  write_json(out / "truth.json", {{"metadata", meta.to_json()}, {"samples", truth_to_json(synthetic)}});
  write_json(out / "run.json", meta.to_json());
}

void cmd_train(const RunConfig& c) {
  const fs::path out(c.output);
  std::vector<fs::path> inputs;
  if (!c.dataset.empty()) inputs.push_back(c.dataset);
  const Metadata meta = metadata_for(c, inputs);
  if (c.task == "detector") {
    const DetectorConfig dc = detector_config(c);
    std::vector<FormationImage> images;
    for (LabeledImage& li : labeled_images(c, dc, "train")) images.push_back(std::move(li.image));
    if (images.empty()) throw InvalidArgument("train: no formation-labelled images in the training split");
    DetectorTrainResult result = train_detector(images, dc, train_config(c));
    make_dir(out);
    save_detector(result.model, out / "detector.ckpt", meta.to_json());
    write_loss_csv(out / "loss.csv", meta, result.loss_history);
    write_json(out / "run.json", meta.to_json());
    return;
  }
  const Dataset ds = load_dataset(c.dataset);
  const std::vector<VideoSample> train = ds.subset(ds.manifest.train_ids);
  if (train.empty()) throw InvalidArgument("train: empty training split");
  const std::size_t value_dim = static_cast<std::size_t>(train.front().clip_features.cols());
  const std::size_t group_dim =
      train.front().has_actors() ? static_cast<std::size_t>(train.front().actor_frames.front().features.cols()) : value_dim;
  const GoatConfig gc = goat_config(c, value_dim, group_dim);
  TrainResult result = train_model(train, {ds.manifest.score_min, ds.manifest.score_max}, gc, train_config(c));
  make_dir(out);
  save_checkpoint(result.model, out / "model.ckpt", meta.to_json());
  write_loss_csv(out / "loss.csv", meta, result.loss_history);
  write_json(out / "run.json", meta.to_json());
}

void cmd_eval(const RunConfig& c) {
  std::vector<fs::path> inputs{c.dataset};
  inputs.emplace_back(c.predictions.empty() ? c.checkpoint : c.predictions);
  if (!c.segments.empty()) inputs.emplace_back(c.segments);
  const Metadata meta = metadata_for(c, inputs);
  const Dataset ds = load_dataset(c.dataset);
  const std::vector<VideoSample> samples = ds.subset(split_ids(ds.manifest, c.split));
  std::vector<double> truth(samples.size()), predicted(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) truth[i] = samples[i].score;
  if (!c.predictions.empty()) {
    const std::map<std::string, double> given = read_predictions(c.predictions);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto it = given.find(samples[i].id);
      if (it == given.end()) throw InvalidArgument(c.predictions + ": no prediction for " + samples[i].id);
      predicted[i] = it->second;
    }
  } else {
    GoatModel model = load_checkpoint(c.checkpoint);
    const ScoreRange range{ds.manifest.score_min, ds.manifest.score_max};
    parallel_for(samples.size(), c.workers,
                 [&](std::size_t i) { predicted[i] = range.denormalize(predict_score(model, samples[i])); });
  }
  MetricReport report;
  report.rho = spearman(truth, predicted);
  report.r_l2_x100 = 100.0 * relative_l2(truth, predicted, ds.manifest.score_min, ds.manifest.score_max);
  if (!c.segments.empty()) report.segmentation = segmentation_from_file(c.segments, samples);
  Json doc = report.to_json();
  doc["samples"] = samples.size();
  doc["metadata"] = meta.to_json();
  const fs::path out(c.output);
  make_dir(out);
  write_json(out / "report.json", doc);
  std::string csv = csv_header(meta) + "id,score,prediction\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    csv += samples[i].id + "," + format17(truth[i]) + "," + format17(predicted[i]) + "\n";
  }
  write_file(out / "predictions.csv", csv);
}

void cmd_detect(const RunConfig& c) {
  std::vector<fs::path> inputs{c.detector};
  if (!c.dataset.empty()) inputs.emplace_back(c.dataset);
  const Metadata meta = metadata_for(c, inputs);
  DetectorModel model = load_detector(c.detector);
  model.config.threshold = c.tau;
  model.config.match_radius = c.match_radius;
  const AnchorGrid grid(model.config.grid_side);
  const std::vector<LabeledImage> images = labeled_images(c, model.config, c.split);
  std::vector<std::vector<DetectedVertex>> detections(images.size());
  std::vector<DetectionScore> scores(images.size());
  parallel_for(images.size(), c.workers, [&](std::size_t i) {
    const VertexPrediction pred = detect_formation(images[i].image.patch_features, grid, model);
    detections[i] = decode_vertices(pred, grid, c.tau);
    std::vector<Point2> points;
    for (const DetectedVertex& v : detections[i]) points.push_back({v.x, v.y});
    scores[i] = evaluate_detection(points, images[i].image.vertices, model.config.radius());
  });
  const auto score_json = [](const DetectionScore& s) {
    return Json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"mean_offset_error", s.mean_offset_error},
                {"matched", s.matched},     {"predicted", s.predicted}, {"truth", s.truth}};
  };
  Json per_image = Json::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    Json vertices = Json::array(), truth = Json::array();
    for (const DetectedVertex& v : detections[i]) vertices.push_back({{"x", v.x}, {"y", v.y}, {"confidence", v.confidence}});
    for (const Point2& p : images[i].image.vertices) truth.push_back({p.x, p.y});
    per_image.push_back({{"id", images[i].id}, {"vertices", vertices}, {"truth", truth}, {"score", score_json(scores[i])}});
  }
  const DetectionScore total = aggregate_detection(scores);
  Json summary = score_json(total);
  summary["mean_offset_error_patches"] = total.mean_offset_error * static_cast<double>(model.config.grid_side);
  summary["images"] = images.size();
  summary["match_radius"] = model.config.radius();
  const fs::path out(c.output);
  make_dir(out);
  write_json(out / "detections.json", {{"metadata", meta.to_json()}, {"aggregate", summary}, {"images", per_image}});
}

void cmd_export_attention(const RunConfig& c) {
  const Metadata meta = metadata_for(c, {c.dataset, c.checkpoint});
  GoatModel model = load_checkpoint(c.checkpoint);
  if (model.config.variant != Variant::goat) throw NoAttentionTrace("no attention trace in baseline checkpoint");
  const Dataset ds = load_dataset(c.dataset);
  const std::vector<VideoSample> samples = ds.subset(split_ids(ds.manifest, c.split));
  const std::map<std::string, std::vector<bool>> masks = element_masks(c.dataset, samples);
  const fs::path out(c.output);
  make_dir(out);
  std::vector<std::string> lines = meta.lines();
  parallel_for(samples.size(), c.workers, [&](std::size_t i) {
    const FuseResult fused = fuse_sample(model, samples[i]);
    std::vector<std::string> sample_lines = lines;
    sample_lines.push_back("sample=" + samples[i].id);
    const auto it = masks.find(samples[i].id);
    export_attention(fused.trace, out / (samples[i].id + ".csv"), sample_lines,
                     it == masks.end() ? std::vector<bool>{} : it->second);
  });
  write_json(out / "run.json", meta.to_json());
}

void run(const RunConfig& c) {
  validate(c);
  if (c.command == "generate") {
    cmd_generate(c);
  } else if (c.command == "train") {
    cmd_train(c);
  } else if (c.command == "eval") {
    cmd_eval(c);
  } else if (c.command == "detect") {
    cmd_detect(c);
  } else {
    cmd_export_attention(c);
  }
}

}  // namespace goat::cli
