#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace ocpi {

// Object ids carried by labeled point clouds and label rasters.
enum class ObjectLabel : std::uint8_t { background = 0, lower = 1, top = 2 };

/// A scanner sample in millimeters. x runs along the scan travel, y along the
/// laser line, z is the height above the belt.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

/// Unordered points with optional per-point object labels.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> points);
  PointCloud(std::vector<Point3> points, std::vector<ObjectLabel> labels);

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  bool has_labels() const noexcept { return has_labels_; }

  std::span<const Point3> points() const noexcept { return points_; }
  std::span<const ObjectLabel> labels() const noexcept { return labels_; }
  const Point3& operator[](std::size_t i) const { return points_[i]; }
  ObjectLabel label(std::size_t i) const;

  void push_back(const Point3& p);
  void push_back(const Point3& p, ObjectLabel label);
  void reserve(std::size_t n);

  // Subset in the order given by `indices`.
  PointCloud select(std::span<const std::size_t> indices) const;
  std::size_t count_label(ObjectLabel label) const;

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::vector<Point3> points_;
  std::vector<ObjectLabel> labels_;
  bool has_labels_ = false;
};

/// Equidistant (x, y) lattice. Cell (i, j) sits at (x0 + i*dx, y0 + j*dy).
struct GridSpec {
  int nx = 256;
  int ny = 64;
  double dx = 0.3;
  double dy = 1.1;
  double x0 = 0.0;
  double y0 = 0.0;

  void validate() const;
  std::size_t cells() const noexcept { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  // Row-major in (i, j): i over nx, j over ny.
  std::size_t index(int i, int j) const noexcept {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(j);
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

std::pair<double, double> cell_center(const GridSpec& spec, int i, int j);

// Grid of the given size and pitch centered on the (x, y) bounding box of a
// non-empty cloud.
GridSpec grid_centered_on(const PointCloud& cloud, int nx, int ny, double dx, double dy);

/// z-values on a grid plus a validity mask. Invalid cells hold z = 0.
class DepthImage {
 public:
  DepthImage() = default;
  explicit DepthImage(const GridSpec& spec);  // all invalid
  DepthImage(const GridSpec& spec, std::vector<double> z, std::vector<std::uint8_t> valid);

  const GridSpec& spec() const noexcept { return spec_; }
  std::span<const double> z() const noexcept { return z_; }
  std::span<const std::uint8_t> valid() const noexcept { return valid_; }
  double z(int i, int j) const { return z_[spec_.index(i, j)]; }
  bool valid(int i, int j) const { return valid_[spec_.index(i, j)] != 0; }
  std::size_t valid_count() const;

  void set(std::size_t cell, double z);  // marks valid
  void clear(std::size_t cell);          // marks invalid, z = 0

  friend bool operator==(const DepthImage&, const DepthImage&) = default;

 private:
  GridSpec spec_;
  std::vector<double> z_;
  std::vector<std::uint8_t> valid_;
};

/// Cell -> index of the matched source point, or kNoPoint.
struct GridMapping {
  static constexpr std::int64_t kNoPoint = -1;

  GridSpec spec;
  std::vector<std::int64_t> cell_to_point;

  GridMapping() = default;
  explicit GridMapping(const GridSpec& s) : spec(s), cell_to_point(s.cells(), kNoPoint) {}

  void validate_against(const PointCloud& source) const;
};

// Values in [0, 1] on a grid, same cell order as DepthImage.
using UnitRaster = std::vector<double>;

UnitRaster normalize_depth(const DepthImage& img, double z_max);
DepthImage denormalize_depth(std::span<const double> raster, double z_max, const GridSpec& spec,
                             std::span<const std::uint8_t> valid);

}  // namespace ocpi
