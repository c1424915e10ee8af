#include "commands.hpp"

#include "goat/errors.hpp"
#include "goat/feature_io.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>

namespace {

using goat::cli::RunConfig;

// Exit codes.
constexpr int kOk = 0;
constexpr int kInvalidConfig = 2;
constexpr int kIoFailure = 3;
constexpr int kDiverged = 4;
constexpr int kCheckpointMismatch = 5;
constexpr int kNoAttention = 6;

// The config file is applied before flags, so it is located by hand first.
std::string find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

void add_paths(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--output,-o", c.output, "Output directory");
}

void add_common(CLI::App* cmd, RunConfig& c, std::string& config_path) {
  cmd->add_option("--config", config_path, "JSON file with RunConfig fields; flags override it");
  cmd->add_option("--seed", c.seed, "Run seed");
  cmd->add_option("--workers", c.workers, "Worker threads for per-sample work");
  add_paths(cmd, c);
}

void add_model(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--variant", c.variant, "baseline or goat");
  cmd->add_option("--layers,-L", c.layers, "Attention layers");
  cmd->add_option("--heads", c.heads, "Attention heads");
  cmd->add_option("--hidden", c.hidden, "Head hidden width");
  cmd->add_option("--mu", c.mu, "Relation-graph distance threshold");
}

void add_detector(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--tau", c.tau, "Confidence threshold");
  cmd->add_option("--lambda", c.lambda, "Offset loss weight");
  cmd->add_option("--grid-side", c.grid_side, "Patches per side");
  cmd->add_option("--detector-dim", c.detector_dim, "Patch feature width");
  cmd->add_option("--images", c.images, "Generated formation images when no dataset is given");
  cmd->add_option("--match-radius", c.match_radius, "Match radius; 0 means one patch diagonal");
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig config;
  std::string config_path;
  try {
    config_path = find_config_path(argc, argv);
    if (!config_path.empty()) {
      goat::Json doc;
      try {
        doc = goat::Json::parse(goat::read_file(config_path));
      } catch (const goat::Json::parse_error& e) {
        throw goat::InvalidArgument(config_path + ": " + e.what());
      }
      config = RunConfig::from_json(doc, config);
    }
  } catch (const goat::IoError& e) {
    std::cerr << "error: --config: " << e.what() << "\n";
    return kInvalidConfig;
  } catch (const goat::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalidConfig;
  }

  CLI::App app{"Group-aware attention for action quality assessment"};
  app.require_subcommand(1);

  CLI::App* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  add_common(generate, config, config_path);
  generate->add_option("--clips,-T", config.clips, "Clips per video");
  generate->add_option("--actors,-N", config.actors, "Actors per clip");
  generate->add_option("--feature-dim,-d", config.feature_dim, "Feature width");
  generate->add_option("--samples,-K", config.samples, "Videos");
  generate->add_option("--score-min", config.score_min, "Lowest score");
  generate->add_option("--score-max", config.score_max, "Highest score");

  CLI::App* train = app.add_subcommand("train", "Train a score model or a formation detector");
  add_common(train, config, config_path);
  train->add_option("--dataset", config.dataset, "Dataset directory");
  train->add_option("--task", config.task, "score or detector");
  train->add_option("--epochs", config.epochs, "Epochs");
  train->add_option("--lr", config.lr, "Learning rate");
  train->add_option("--batch-size", config.batch_size, "Videos per step; 0 = full batch");
  add_model(train, config);
  add_detector(train, config);

  CLI::App* eval = app.add_subcommand("eval", "Score a checkpoint or a predictions file");
  add_common(eval, config, config_path);
  eval->add_option("--dataset", config.dataset, "Dataset directory");
  eval->add_option("--checkpoint", config.checkpoint, "Model checkpoint");
  eval->add_option("--predictions", config.predictions, "CSV with id,prediction columns (skips the model)");
  eval->add_option("--segments", config.segments, "JSON of predicted action segments per sample");
  eval->add_option("--split", config.split, "train, test or all");

  CLI::App* detect = app.add_subcommand("detect", "Run a formation detector on labelled views");
  add_common(detect, config, config_path);
  detect->add_option("--detector", config.detector, "Detector checkpoint");
  detect->add_option("--dataset", config.dataset, "Dataset with formation labels; generated images otherwise");
  detect->add_option("--split", config.split, "train, test or all");
  add_detector(detect, config);

  CLI::App* attention = app.add_subcommand("export-attention", "Write per-sample attention CSVs");
  add_common(attention, config, config_path);
  attention->add_option("--dataset", config.dataset, "Dataset directory");
  attention->add_option("--checkpoint", config.checkpoint, "goat checkpoint");
  attention->add_option("--split", config.split, "train, test or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalidConfig;
  }
  config.command = app.get_subcommands().front()->get_name();

  try {
    goat::cli::run(config);
  } catch (const goat::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalidConfig;
  } catch (const goat::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const goat::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckpointMismatch;
  } catch (const goat::cli::NoAttentionTrace& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNoAttention;
  } catch (const goat::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const goat::FeatureFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalidConfig;
  }
  return kOk;
}
