#include "goat/train_config.hpp"

#include <algorithm>

namespace goat {

Json TrainConfig::to_json() const {
  return {{"epochs", epochs}, {"learning_rate", learning_rate}, {"seed", seed}, {"batch_size", batch_size}};
}

TrainConfig TrainConfig::from_json(const Json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.batch_size = j.value("batch_size", c.batch_size);
  return c;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_bounds(std::size_t count, std::size_t batch_size) {
  const std::size_t batch = batch_size == 0 || batch_size > count ? count : batch_size;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t start = 0; start < count;) {
    std::size_t size = std::min(batch, count - start);
    if (count - start - size == 1) ++size;
    out.emplace_back(start, size);
    start += size;
  }
  return out;
}

}  // namespace goat
