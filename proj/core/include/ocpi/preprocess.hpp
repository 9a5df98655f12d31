#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ocpi/geometry.hpp"

namespace ocpi::preprocess {

struct CropWindow {
  double x_center = 46.0;  // band is [x_center - x_width/2, x_center + x_width/2]
  double x_width = 92.0;
  double z_min = 0.0;
  double z_depth = 18.0;   // z in [z_min, z_min + z_depth]
  double y_min = -std::numeric_limits<double>::infinity();
  double y_max = std::numeric_limits<double>::infinity();

  void validate() const;
};

struct DbscanParams {
  double eps = 4.0;
  int min_pts = 4;  // neighborhood size including the point itself
  std::size_t min_subcluster = 500;
  std::size_t min_total = 6000;

  void validate() const;
};

// Closed-interval crop; labels travel with their points.
PointCloud crop(const PointCloud& cloud, const CropWindow& w);

constexpr std::int32_t kNoise = -1;

// Density clustering in 3D. Cluster ids are numbered by the lowest point
// index they contain; a border point joins the cluster of its nearest core
// neighbor (lowest index on ties).
std::vector<std::int32_t> dbscan(const PointCloud& cloud, const DbscanParams& p);

// Keeps clusters with >= min_subcluster points; throws ScanError when fewer
// than min_total points survive.
PointCloud select_object_points(const PointCloud& cloud, std::span<const std::int32_t> clusters,
                                const DbscanParams& p);

struct Neighbor {
  std::size_t index;
  double distance;
};

/// Balanced 2D k-d tree over the (x, y) projection of a cloud.
class KdTree2 {
 public:
  KdTree2() = default;
  explicit KdTree2(const PointCloud& cloud);

  std::size_t size() const noexcept { return xs_.size(); }
  // Exact Euclidean nearest neighbor; ties go to the lowest point index.
  Neighbor nearest(double x, double y) const;

 private:
  struct Node {
    std::uint32_t point;
    std::int32_t left = -1, right = -1;
    std::uint8_t axis;
  };
  std::int32_t build(std::vector<std::uint32_t>& idx, std::size_t lo, std::size_t hi, int depth);
  void search(std::int32_t node, double x, double y, double& best_d2, std::uint32_t& best) const;

  std::vector<double> xs_, ys_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

KdTree2 build_kdtree(const PointCloud& cloud);

struct GridResult {
  DepthImage image;
  GridMapping mapping;
  std::vector<ObjectLabel> labels;  // per cell; empty when the cloud is unlabeled
};

GridResult interpolate_to_grid(const PointCloud& cloud, const GridSpec& spec, double max_match_dist);

// Top-class cells get z = single_object_height + offset and become valid.
DepthImage mask_top_object(const DepthImage& img, std::span<const ObjectLabel> segmap, double single_object_height,
                           double offset = 15.0);

struct Config {
  CropWindow crop;
  DbscanParams dbscan;
  int grid_nx = 256;
  int grid_ny = 64;
  double grid_dx = 0.3;
  double grid_dy = 1.1;
  double max_match_dist = 0.0;  // <= 0 selects max(dx, dy)
  double single_object_height = 5.0;
  double mask_offset = 15.0;

  double match_distance() const noexcept { return max_match_dist > 0.0 ? max_match_dist : std::max(grid_dx, grid_dy); }
  void validate() const;
};

struct Filtered {
  PointCloud cloud;  // object points after crop + DBSCAN + selection
  GridSpec grid;     // centered on the selected points
};

// crop -> dbscan -> select_object_points -> grid placement.
Filtered filter_scan(const PointCloud& raw, const Config& cfg);
// Same filter, but never raises ScanError (min_total disabled).
PointCloud filter_lenient(const PointCloud& raw, const Config& cfg);

}  // namespace ocpi::preprocess
