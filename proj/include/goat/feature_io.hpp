#pragma once

#include "goat/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace goat {

// LOGF feature file:
//   "LOGF" | u32 version=1 | u32 rows (T) | u32 cols (d) | rows*cols f64
// All integers and floats little-endian, payload row-major.
inline constexpr std::uint32_t kFeatureFileVersion = 1;

class FeatureFileError : public std::runtime_error {
 public:
  enum class Code { io, bad_magic, version_mismatch, truncated };
  FeatureFileError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

std::string encode_features(const Matrix& features);
Matrix decode_features(std::string_view bytes);

void save_features(const Matrix& features, const std::filesystem::path& path);
Matrix load_features(const std::filesystem::path& path);

// Little-endian helpers shared with the checkpoint writer.
void append_u32(std::string& out, std::uint32_t v);
void append_f64(std::string& out, double v);
std::uint32_t read_u32(std::string_view bytes, std::size_t offset);
double read_f64(std::string_view bytes, std::size_t offset);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace goat
