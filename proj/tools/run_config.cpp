#include "run_config.hpp"

#include "goat/errors.hpp"
#include "goat/feature_io.hpp"
#include "goat/random.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace goat::cli {

namespace fs = std::filesystem;

Json RunConfig::to_json() const {
  return {{"command", command},
          {"dataset", dataset},
          {"output", output},
          {"checkpoint", checkpoint},
          {"predictions", predictions},
          {"segments", segments},
          {"detector", detector},
          {"split", split},
          {"seed", seed},
          {"workers", workers},
          {"clips", clips},
          {"actors", actors},
          {"feature_dim", feature_dim},
          {"samples", samples},
          {"score_min", score_min},
          {"score_max", score_max},
          {"task", task},
          {"variant", variant},
          {"epochs", epochs},
          {"lr", lr},
          {"batch_size", batch_size},
          {"layers", layers},
          {"heads", heads},
          {"hidden", hidden},
          {"mu", mu},
          {"tau", tau},
          {"lambda", lambda},
          {"grid_side", grid_side},
          {"detector_dim", detector_dim},
          {"images", images},
          {"match_radius", match_radius}};
}

RunConfig RunConfig::from_json(const Json& j, RunConfig c) {
  if (!j.is_object()) throw InvalidArgument("config file must hold a JSON object");
  const Json known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw InvalidArgument("config file: unknown key '" + key + "'");
  }
  try {
    const auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("command", c.command);
    get("dataset", c.dataset);
    get("output", c.output);
    get("checkpoint", c.checkpoint);
    get("predictions", c.predictions);
    get("segments", c.segments);
    get("detector", c.detector);
    get("split", c.split);
    get("seed", c.seed);
    get("workers", c.workers);
    get("clips", c.clips);
    get("actors", c.actors);
    get("feature_dim", c.feature_dim);
    get("samples", c.samples);
    get("score_min", c.score_min);
    get("score_max", c.score_max);
    get("task", c.task);
    get("variant", c.variant);
    get("epochs", c.epochs);
    get("lr", c.lr);
    get("batch_size", c.batch_size);
    get("layers", c.layers);
    get("heads", c.heads);
    get("hidden", c.hidden);
    get("mu", c.mu);
    get("tau", c.tau);
    get("lambda", c.lambda);
    get("grid_side", c.grid_side);
    get("detector_dim", c.detector_dim);
    get("images", c.images);
    get("match_radius", c.match_radius);
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("config file: ") + e.what());
  }
  return c;
}

namespace {

void require_output(const RunConfig& c) {
  if (c.output.empty()) throw InvalidArgument(c.command + ": --output is required");
}

void require_dataset(const RunConfig& c) {
  if (c.dataset.empty()) throw InvalidArgument(c.command + ": --dataset is required");
  if (!fs::exists(fs::path(c.dataset) / "manifest.json")) {
    throw InvalidArgument(c.command + ": no dataset at '" + c.dataset + "'");
  }
}

void require_file(const std::string& path, const std::string& flag, const std::string& command) {
  if (path.empty()) throw InvalidArgument(command + ": " + flag + " is required");
  if (!fs::is_regular_file(path)) throw InvalidArgument(command + ": " + flag + " '" + path + "' does not exist");
}

void validate_training(const RunConfig& c) {
  if (!(c.lr >= 0.0)) throw InvalidArgument("--lr must be >= 0");
}

void validate_detector(const RunConfig& c) { detector_config(c).validate(); }

}  // namespace

void validate(const RunConfig& c) {
  if (c.workers == 0) throw InvalidArgument("--workers must be >= 1");
  if (c.split != "train" && c.split != "test" && c.split != "all") {
    throw InvalidArgument("--split must be train, test or all");
  }
  if (c.command == "generate") {
    require_output(c);
    goat::validate(synthetic_config(c));
  } else if (c.command == "train") {
    require_output(c);
    validate_training(c);
    if (c.task == "score") {
      require_dataset(c);
      (void)parse_variant(c.variant);
      if (c.heads == 0) throw InvalidArgument("--heads must be >= 1");
      if (c.hidden == 0) throw InvalidArgument("--hidden must be >= 1");
      if (!(c.mu > 0.0)) throw InvalidArgument("--mu must be > 0");
    } else if (c.task == "detector") {
      if (!c.dataset.empty()) require_dataset(c);
      validate_detector(c);
      if (c.dataset.empty() && c.images < 4) throw InvalidArgument("--images must be >= 4");
    } else {
      throw InvalidArgument("--task must be score or detector");
    }
  } else if (c.command == "eval") {
    require_output(c);
    require_dataset(c);
    if (c.predictions.empty()) {
      require_file(c.checkpoint, "--checkpoint", c.command);
    } else {
      require_file(c.predictions, "--predictions", c.command);
    }
    if (!c.segments.empty()) require_file(c.segments, "--segments", c.command);
  } else if (c.command == "detect") {
    require_output(c);
    require_file(c.detector, "--detector", c.command);
    if (!c.dataset.empty()) require_dataset(c);
    if (c.dataset.empty() && c.images < 4) throw InvalidArgument("--images must be >= 4");
    if (!(c.tau > 0.0 && c.tau < 1.0)) throw InvalidArgument("--tau must lie in (0,1)");
    if (c.match_radius < 0.0) throw InvalidArgument("--match-radius must be >= 0");
  } else if (c.command == "export-attention") {
    require_output(c);
    require_dataset(c);
    require_file(c.checkpoint, "--checkpoint", c.command);
  } else {
    throw InvalidArgument("unknown command '" + c.command + "'");
  }
}

SyntheticConfig synthetic_config(const RunConfig& c) {
  SyntheticConfig s;
  s.clips = c.clips;
  s.actors = c.actors;
  s.feature_dim = c.feature_dim;
  s.samples = c.samples;
  s.seed = c.seed;
  s.score_min = c.score_min;
  s.score_max = c.score_max;
  return s;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.epochs = c.epochs;
  t.learning_rate = c.lr;
  t.seed = c.seed;
  t.batch_size = c.batch_size;
  return t;
}

GoatConfig goat_config(const RunConfig& c, std::size_t value_dim, std::size_t group_dim) {
  GoatConfig g;
  g.variant = parse_variant(c.variant);
  g.value_dim = value_dim;
  g.group_dim = group_dim;
  g.layers = c.layers;
  g.heads = c.heads;
  g.hidden = c.hidden;
  g.graph.distance_threshold = c.mu;
  return g;
}

DetectorConfig detector_config(const RunConfig& c) {
  DetectorConfig d;
  d.grid_side = c.grid_side;
  d.feature_dim = c.detector_dim;
  d.hidden = c.hidden;
  d.lambda = c.lambda;
  d.threshold = c.tau;
  d.match_radius = c.match_radius;
  return d;
}

std::string content_hash(const std::vector<fs::path>& inputs, std::string_view extra) {
  std::uint64_t h = fnv1a64(extra);
  const auto add_file = [&](const fs::path& file, const std::string& name) {
    h = fnv1a64(name, h);
    h = fnv1a64(std::string_view("\0", 1), h);
    h = fnv1a64(read_file(file), h);
  };
  for (const fs::path& input : inputs) {
    if (fs::is_directory(input)) {
      std::set<std::string> names;
      for (const auto& entry : fs::recursive_directory_iterator(input)) {
        if (entry.is_regular_file()) names.insert(fs::relative(entry.path(), input).generic_string());
      }
      for (const std::string& name : names) add_file(input / name, name);
    } else if (fs::is_regular_file(input)) {
      add_file(input, input.filename().generic_string());
    }
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace goat::cli
