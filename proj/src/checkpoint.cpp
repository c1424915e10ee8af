#include "goat/checkpoint.hpp"

#include "goat/errors.hpp"
#include "goat/feature_io.hpp"

#include <cstring>

namespace goat {

namespace {
constexpr char kMagic[4] = {'G', 'O', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kPrefix = 12;
}  // namespace

std::string encode_checkpoint_container(Json header, const ParameterPack& state) {
  Json tensors = Json::array();
  for (const auto& e : state.entries()) tensors.push_back({{"name", e.name}, {"size", e.size}});
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();
  std::string out(kMagic, 4);
  append_u32(out, kVersion);
  append_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  const Vector flat = state.flatten();
  out.reserve(out.size() + 8 * static_cast<std::size_t>(flat.size()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) append_f64(out, flat[i]);
  return out;
}

CheckpointContainer decode_checkpoint_container(std::string_view bytes) {
  if (bytes.size() < kPrefix || std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("checkpoint: bad magic");
  if (read_u32(bytes, 4) != kVersion) throw CheckpointError("checkpoint: unsupported version");
  const std::size_t header_len = read_u32(bytes, 8);
  if (bytes.size() < kPrefix + header_len) throw CheckpointError("checkpoint: truncated header");
  CheckpointContainer c;
  try {
    c.header = Json::parse(bytes.substr(kPrefix, header_len));
  } catch (const Json::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
  c.payload = bytes.substr(kPrefix + header_len);
  return c;
}

void restore_state(const CheckpointContainer& container, ParameterPack& state) {
  const Json tensors = container.header.value("tensors", Json::array());
  if (tensors.size() != state.entries().size()) throw CheckpointError("checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& e = state.entries()[i];
    if (tensors[i].value("name", std::string()) != e.name || tensors[i].value("size", Eigen::Index{-1}) != e.size) {
      throw CheckpointError("checkpoint: tensor " + e.name + " does not match the config");
    }
  }
  if (container.payload.size() != 8 * static_cast<std::size_t>(state.size())) {
    throw CheckpointError("checkpoint: payload size mismatch");
  }
  Vector flat(state.size());
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = read_f64(container.payload, 8 * static_cast<std::size_t>(i));
  state.assign(flat);
}

}  // namespace goat
