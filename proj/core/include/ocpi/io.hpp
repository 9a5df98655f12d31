#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ocpi/geometry.hpp"

namespace ocpi::io {

// Point-cloud file: "OCPC", u32 count, u8 has_labels, count x (f32 x, y, z),
// then count x u8 labels when present. Little-endian.
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_cloud(const std::filesystem::path& path);

// Depth raster file: "OCDR", u32 nx, u32 ny, f32 dx, dy, x0, y0, nx*ny f32 z
// (row-major in (i, j)), nx*ny u8 valid.
void write_depth(const std::filesystem::path& path, const DepthImage& img);
DepthImage read_depth(const std::filesystem::path& path);

// 8-bit binary PGM preview; values are clamped to [lo, hi]. Row r of the
// picture is grid row i.
void write_pgm(const std::filesystem::path& path, std::span<const double> values, int rows, int cols,
               double lo, double hi);

// Writes `contents` to a sibling temp file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_text(const std::filesystem::path& path);

// Little-endian binary helpers shared by the file formats.
class BinaryWriter {
 public:
  void bytes(std::span<const char> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void magic(const char (&m)[5]) { bytes(std::span<const char>(m, 4)); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void f32(float v);
  void str(const std::string& s);
  const std::vector<char>& buffer() const noexcept { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<char> buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);
  void expect_magic(const char (&m)[5]);
  std::uint8_t u8();
  std::uint32_t u32();
  float f32();
  std::string str();
  bool at_end() const noexcept { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n);
  std::string name_;
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace ocpi::io
