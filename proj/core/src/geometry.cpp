#include "ocpi/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ocpi/errors.hpp"

namespace ocpi {

namespace {

bool finite(const Point3& p) { return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z); }

void check_finite(const Point3& p) {
  if (!finite(p)) throw RangeError("point coordinates must be finite");
}

}  // namespace

PointCloud::PointCloud(std::vector<Point3> points) : points_(std::move(points)) {
  for (const auto& p : points_) check_finite(p);
}

PointCloud::PointCloud(std::vector<Point3> points, std::vector<ObjectLabel> labels)
    : points_(std::move(points)), labels_(std::move(labels)), has_labels_(true) {
  if (labels_.size() != points_.size())
    throw ShapeError("label count " + std::to_string(labels_.size()) + " != point count " +
                     std::to_string(points_.size()));
  for (const auto& p : points_) check_finite(p);
}

ObjectLabel PointCloud::label(std::size_t i) const {
  if (!has_labels_) throw StateError("point cloud carries no labels");
  return labels_.at(i);
}

void PointCloud::push_back(const Point3& p) {
  if (has_labels_) throw StateError("labeled cloud requires a label per point");
  check_finite(p);
  points_.push_back(p);
}

void PointCloud::push_back(const Point3& p, ObjectLabel label) {
  if (!has_labels_ && !points_.empty()) throw StateError("unlabeled cloud cannot take labels");
  check_finite(p);
  has_labels_ = true;
  points_.push_back(p);
  labels_.push_back(label);
}

void PointCloud::reserve(std::size_t n) {
  points_.reserve(n);
  if (has_labels_) labels_.reserve(n);
}

PointCloud PointCloud::select(std::span<const std::size_t> indices) const {
  std::vector<Point3> pts;
  pts.reserve(indices.size());
  for (auto i : indices) pts.push_back(points_.at(i));
  if (!has_labels_) return PointCloud(std::move(pts));
  std::vector<ObjectLabel> lbl;
  lbl.reserve(indices.size());
  for (auto i : indices) lbl.push_back(labels_[i]);
  return PointCloud(std::move(pts), std::move(lbl));
}

std::size_t PointCloud::count_label(ObjectLabel label) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
}

void GridSpec::validate() const {
  if (nx < 2 || ny < 2) throw RangeError("grid needs nx, ny >= 2");
  if (!(dx > 0.0) || !(dy > 0.0)) throw RangeError("grid pitch must be positive");
  if (!std::isfinite(x0) || !std::isfinite(y0) || !std::isfinite(dx) || !std::isfinite(dy))
    throw RangeError("grid parameters must be finite");
}

std::pair<double, double> cell_center(const GridSpec& spec, int i, int j) {
  if (i < 0 || i >= spec.nx || j < 0 || j >= spec.ny)
    throw IndexError("cell (" + std::to_string(i) + ", " + std::to_string(j) + ") outside " +
                     std::to_string(spec.nx) + "x" + std::to_string(spec.ny) + " grid");
  return {spec.x0 + i * spec.dx, spec.y0 + j * spec.dy};
}

GridSpec grid_centered_on(const PointCloud& cloud, int nx, int ny, double dx, double dy) {
  if (cloud.empty()) throw RangeError("cannot center a grid on an empty cloud");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& p : cloud.points()) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  GridSpec spec{nx, ny, dx, dy, 0.0, 0.0};
  spec.x0 = 0.5 * (xmin + xmax) - 0.5 * (nx - 1) * dx;
  spec.y0 = 0.5 * (ymin + ymax) - 0.5 * (ny - 1) * dy;
  spec.validate();
  return spec;
}

DepthImage::DepthImage(const GridSpec& spec) : spec_(spec) {
  spec_.validate();
  z_.assign(spec_.cells(), 0.0);
  valid_.assign(spec_.cells(), 0);
}

DepthImage::DepthImage(const GridSpec& spec, std::vector<double> z, std::vector<std::uint8_t> valid)
    : spec_(spec), z_(std::move(z)), valid_(std::move(valid)) {
  spec_.validate();
  if (z_.size() != spec_.cells() || valid_.size() != spec_.cells())
    throw ShapeError("depth image buffers do not match the grid");
  for (std::size_t c = 0; c < z_.size(); ++c) {
    if (valid_[c]) {
      if (!std::isfinite(z_[c])) throw RangeError("non-finite z on a valid cell");
      valid_[c] = 1;
    } else {
      z_[c] = 0.0;
    }
  }
}

std::size_t DepthImage::valid_count() const {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), std::uint8_t{1}));
}

void DepthImage::set(std::size_t cell, double z) {
  if (!std::isfinite(z)) throw RangeError("non-finite z on a valid cell");
  z_.at(cell) = z;
  valid_[cell] = 1;
}

void DepthImage::clear(std::size_t cell) {
  z_.at(cell) = 0.0;
  valid_[cell] = 0;
}

void GridMapping::validate_against(const PointCloud& source) const {
  if (cell_to_point.size() != spec.cells()) throw ShapeError("mapping does not match its grid");
  for (auto idx : cell_to_point) {
    if (idx == kNoPoint) continue;
    if (idx < 0 || static_cast<std::size_t>(idx) >= source.size())
      throw IndexError("mapping refers to point " + std::to_string(idx) + " outside the source cloud");
  }
}

UnitRaster normalize_depth(const DepthImage& img, double z_max) {
  if (!(z_max > 0.0)) throw RangeError("z_max must be positive");
  UnitRaster out(img.spec().cells(), 0.0);
  const auto z = img.z();
  const auto valid = img.valid();
  for (std::size_t c = 0; c < out.size(); ++c) {
    if (!valid[c]) continue;
    if (z[c] < 0.0 || z[c] > z_max)
      throw RangeError("z = " + std::to_string(z[c]) + " mm outside [0, " + std::to_string(z_max) + "]");
    out[c] = z[c] / z_max;
  }
  return out;
}

DepthImage denormalize_depth(std::span<const double> raster, double z_max, const GridSpec& spec,
                             std::span<const std::uint8_t> valid) {
  if (!(z_max > 0.0)) throw RangeError("z_max must be positive");
  if (raster.size() != spec.cells() || valid.size() != spec.cells())
    throw ShapeError("raster does not match the grid");
  std::vector<double> z(spec.cells(), 0.0);
  std::vector<std::uint8_t> v(valid.begin(), valid.end());
  for (std::size_t c = 0; c < z.size(); ++c) {
    const double r = raster[c];
    if (!(r >= 0.0 && r <= 1.0)) throw RangeError("raster value outside [0, 1]");
    if (v[c]) z[c] = r * z_max;
  }
  return DepthImage(spec, std::move(z), std::move(v));
}

}  // namespace ocpi
