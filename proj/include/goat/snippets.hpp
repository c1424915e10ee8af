#pragma once

#include <cstddef>
#include <vector>

namespace goat {

// Half-open frame range [begin, end).
struct FrameRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const FrameRange&) const = default;
};

// floor((frame_count - snippet_len) / stride) + 1 windows of snippet_len
// frames, starting every `stride` frames. Throws InvalidArgument when
// frame_count < snippet_len or either length is zero.
std::size_t snippet_count(std::size_t frame_count, std::size_t snippet_len, std::size_t stride);
std::vector<FrameRange> split_into_snippets(std::size_t frame_count, std::size_t snippet_len,
                                            std::size_t stride);

}  // namespace goat
