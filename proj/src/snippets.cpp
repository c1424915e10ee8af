#include "goat/snippets.hpp"

#include "goat/errors.hpp"

#include <string>

namespace goat {

std::size_t snippet_count(std::size_t frame_count, std::size_t snippet_len, std::size_t stride) {
  if (snippet_len == 0 || stride == 0) throw InvalidArgument("snippet length and stride must be >= 1");
  if (frame_count < snippet_len) {
    throw InvalidArgument("frame count " + std::to_string(frame_count) + " is shorter than one snippet (" +
                          std::to_string(snippet_len) + ")");
  }
  return (frame_count - snippet_len) / stride + 1;
}

std::vector<FrameRange> split_into_snippets(std::size_t frame_count, std::size_t snippet_len,
                                            std::size_t stride) {
  const std::size_t count = snippet_count(frame_count, snippet_len, stride);
  std::vector<FrameRange> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back({i * stride, i * stride + snippet_len});
  return out;
}

}  // namespace goat
