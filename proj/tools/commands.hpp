#pragma once

#include "run_config.hpp"

#include <stdexcept>

namespace goat::cli {

// export-attention was given a checkpoint without attention layers.
class NoAttentionTrace : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void cmd_generate(const RunConfig& config);
void cmd_train(const RunConfig& config);
void cmd_eval(const RunConfig& config);
void cmd_detect(const RunConfig& config);
void cmd_export_attention(const RunConfig& config);

// Dispatches on config.command after validation.
void run(const RunConfig& config);

}  // namespace goat::cli
