#pragma once

#include "goat/dataset.hpp"
#include "goat/formation.hpp"
#include "goat/model.hpp"
#include "goat/synthetic.hpp"
#include "goat/train_config.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace goat::cli {

// Every parameter of one command invocation. Loaded from defaults, then an
// optional JSON file, then command-line flags.
struct RunConfig {
  std::string command;

  std::string dataset;
  std::string output;
  std::string checkpoint;
  std::string predictions;
  std::string segments;
  std::string detector;
  std::string split = "test";

  std::uint64_t seed = 0;
  std::size_t workers = 1;

  std::size_t clips = 32;
  std::size_t actors = 8;
  std::size_t feature_dim = 64;
  std::size_t samples = 80;
  double score_min = 0.0;
  double score_max = 100.0;

  std::string task = "score";
  std::string variant = "goat";
  std::size_t epochs = 500;
  double lr = 1e-2;
  std::size_t batch_size = 0;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t hidden = 32;
  double mu = 0.3;

  double tau = 0.5;
  double lambda = 1.0;
  std::size_t grid_side = 32;
  std::size_t detector_dim = 16;
  std::size_t images = 500;
  double match_radius = 0.0;

  Json to_json() const;
  // Unknown keys are rejected so typos in config files surface.
  static RunConfig from_json(const Json& j, RunConfig base);
  static RunConfig from_json(const Json& j) { return from_json(j, RunConfig()); }
};

// Throws InvalidArgument naming the first violated precondition of `command`.
void validate(const RunConfig& config);

SyntheticConfig synthetic_config(const RunConfig& config);
TrainConfig train_config(const RunConfig& config);
// Widths come from the data: clip features for values, actor features for groups.
GoatConfig goat_config(const RunConfig& config, std::size_t value_dim, std::size_t group_dim);
DetectorConfig detector_config(const RunConfig& config);

// FNV-1a over relative path and bytes of every regular file under each
// input (directories recursed in sorted order), as 16 hex digits.
std::string content_hash(const std::vector<std::filesystem::path>& inputs, std::string_view extra = {});

}  // namespace goat::cli
