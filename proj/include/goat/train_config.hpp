#pragma once

#include "goat/dataset.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace goat {

struct TrainConfig {
  std::size_t epochs = 500;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;  // 0 = full batch

  Json to_json() const;
  static TrainConfig from_json(const Json& j);
};

// Deterministic minibatch boundaries over a per-epoch shuffled order. A
// trailing batch of one is folded into its predecessor so batch statistics
// stay defined.
std::vector<std::pair<std::size_t, std::size_t>> batch_bounds(std::size_t count, std::size_t batch_size);

}  // namespace goat
