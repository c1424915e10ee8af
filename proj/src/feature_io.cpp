#include "goat/feature_io.hpp"

#include "goat/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace goat {

namespace {
constexpr char kMagic[4] = {'L', 'O', 'G', 'F'};
constexpr std::size_t kHeaderSize = 16;
}  // namespace

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void append_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

std::uint32_t read_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return v;
}

double read_f64(std::string_view bytes, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string encode_features(const Matrix& features) {
  std::string out(kMagic, 4);
  append_u32(out, kFeatureFileVersion);
  append_u32(out, static_cast<std::uint32_t>(features.rows()));
  append_u32(out, static_cast<std::uint32_t>(features.cols()));
  out.reserve(kHeaderSize + 8 * features.size());
  for (Eigen::Index i = 0; i < features.size(); ++i) append_f64(out, features.data()[i]);
  return out;
}

Matrix decode_features(std::string_view bytes) {
  using Code = FeatureFileError::Code;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FeatureFileError(Code::bad_magic, "feature file: bad magic");
  }
  if (bytes.size() < kHeaderSize) throw FeatureFileError(Code::truncated, "feature file: truncated header");
  const std::uint32_t version = read_u32(bytes, 4);
  if (version != kFeatureFileVersion) {
    throw FeatureFileError(Code::version_mismatch,
                           "feature file: version " + std::to_string(version) + " unsupported");
  }
  const std::uint64_t rows = read_u32(bytes, 8);
  const std::uint64_t cols = read_u32(bytes, 12);
  if (bytes.size() - kHeaderSize < rows * cols * 8) {
    throw FeatureFileError(Code::truncated, "feature file: payload shorter than " + std::to_string(rows) +
                                                "x" + std::to_string(cols) + " doubles");
  }
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = read_f64(bytes, kHeaderSize + 8 * i);
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void save_features(const Matrix& features, const std::filesystem::path& path) {
  write_file(path, encode_features(features));
}

Matrix load_features(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError& e) {
    throw FeatureFileError(FeatureFileError::Code::io, e.what());
  }
  return decode_features(bytes);
}

}  // namespace goat
