#pragma once

#include "goat/dataset.hpp"
#include "goat/gradcheck.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace goat {

// Binary container shared by every checkpoint kind:
//   "GOAT" | u32 version=1 | u32 header length | JSON header | f64 LE payload
// The header lists {name, size} of every tensor of `state` in order.
std::string encode_checkpoint_container(Json header, const ParameterPack& state);

struct CheckpointContainer {
  Json header;
  std::string_view payload;
};
CheckpointContainer decode_checkpoint_container(std::string_view bytes);

// Checks tensor names and sizes against `state` and fills it from the payload.
void restore_state(const CheckpointContainer& container, ParameterPack& state);

}  // namespace goat
