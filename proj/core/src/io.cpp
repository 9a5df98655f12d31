#include "ocpi/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ocpi/errors.hpp"

namespace ocpi::io {

namespace fs = std::filesystem;

void BinaryWriter::u32(std::uint32_t v) {
  for (int k = 0; k < 4; ++k) buf_.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

void BinaryWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void BinaryWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(std::span<const char>(s.data(), s.size()));
}

void BinaryWriter::save(const fs::path& path) const {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

BinaryReader::BinaryReader(const fs::path& path) : name_(path.string()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + name_);
  buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void BinaryReader::need(std::size_t n) {
  if (buf_.size() - pos_ < n) throw IoError(name_ + ": truncated file");
}

void BinaryReader::expect_magic(const char (&m)[5]) {
  need(4);
  if (std::memcmp(buf_.data() + pos_, m, 4) != 0) throw IoError(name_ + ": bad magic, expected " + m);
  pos_ += 4;
}

std::uint8_t BinaryReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(buf_[pos_++]);
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf_[pos_ + k])) << (8 * k);
  pos_ += 4;
  return v;
}

float BinaryReader::f32() { return std::bit_cast<float>(u32()); }

std::string BinaryReader::str() {
  const auto n = u32();
  need(n);
  std::string s(buf_.data() + pos_, n);
  pos_ += n;
  return s;
}

void write_cloud(const fs::path& path, const PointCloud& cloud) {
  BinaryWriter w;
  w.magic("OCPC");
  w.u32(static_cast<std::uint32_t>(cloud.size()));
  w.u8(cloud.has_labels() ? 1 : 0);
  for (const auto& p : cloud.points()) {
    w.f32(static_cast<float>(p.x));
    w.f32(static_cast<float>(p.y));
    w.f32(static_cast<float>(p.z));
  }
  if (cloud.has_labels())
    for (auto l : cloud.labels()) w.u8(static_cast<std::uint8_t>(l));
  w.save(path);
}

PointCloud read_cloud(const fs::path& path) {
  BinaryReader r(path);
  r.expect_magic("OCPC");
  const auto n = r.u32();
  const bool labeled = r.u8() != 0;
  std::vector<Point3> pts(n);
  for (auto& p : pts) {
    p.x = r.f32();
    p.y = r.f32();
    p.z = r.f32();
  }
  if (!labeled) return PointCloud(std::move(pts));
  std::vector<ObjectLabel> labels(n);
  for (auto& l : labels) {
    const auto v = r.u8();
    if (v > 2) throw IoError(path.string() + ": invalid label " + std::to_string(v));
    l = static_cast<ObjectLabel>(v);
  }
  return PointCloud(std::move(pts), std::move(labels));
}

void write_depth(const fs::path& path, const DepthImage& img) {
  const auto& s = img.spec();
  BinaryWriter w;
  w.magic("OCDR");
  w.u32(static_cast<std::uint32_t>(s.nx));
  w.u32(static_cast<std::uint32_t>(s.ny));
  w.f32(static_cast<float>(s.dx));
  w.f32(static_cast<float>(s.dy));
  w.f32(static_cast<float>(s.x0));
  w.f32(static_cast<float>(s.y0));
  for (double z : img.z()) w.f32(static_cast<float>(z));
  for (auto v : img.valid()) w.u8(v);
  w.save(path);
}

DepthImage read_depth(const fs::path& path) {
  BinaryReader r(path);
  r.expect_magic("OCDR");
  GridSpec s;
  s.nx = static_cast<int>(r.u32());
  s.ny = static_cast<int>(r.u32());
  s.dx = r.f32();
  s.dy = r.f32();
  s.x0 = r.f32();
  s.y0 = r.f32();
  s.validate();
  std::vector<double> z(s.cells());
  for (auto& v : z) v = r.f32();
  std::vector<std::uint8_t> valid(s.cells());
  for (auto& v : valid) v = r.u8();
  return DepthImage(s, std::move(z), std::move(valid));
}

void write_pgm(const fs::path& path, std::span<const double> values, int rows, int cols, double lo, double hi) {
  if (values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw ShapeError("pgm preview size mismatch");
  std::ostringstream head;
  head << "P5\n" << cols << " " << rows << "\n255\n";
  const std::string h = head.str();
  BinaryWriter w;
  w.bytes(std::span<const char>(h.data(), h.size()));
  const double span = hi > lo ? hi - lo : 1.0;
  for (double v : values) {
    const double t = std::clamp((v - lo) / span, 0.0, 1.0);
    w.u8(static_cast<std::uint8_t>(std::lround(t * 255.0)));
  }
  w.save(path);
}

void write_text_atomic(const fs::path& path, const std::string& contents) {
  BinaryWriter w;
  w.bytes(std::span<const char>(contents.data(), contents.size()));
  w.save(path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace ocpi::io
