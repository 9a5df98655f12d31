#include "ocpi/preprocess.hpp"

#include <cmath>

#include "ocpi/errors.hpp"
#include "ocpi/parallel.hpp"

namespace ocpi::preprocess {

void CropWindow::validate() const {
  if (!(x_width > 0.0 && z_depth > 0.0)) throw RangeError("crop window widths must be positive");
  if (!(y_max >= y_min)) throw RangeError("crop window y bounds are inverted");
}

PointCloud crop(const PointCloud& cloud, const CropWindow& w) {
  w.validate();
  const double x_lo = w.x_center - 0.5 * w.x_width, x_hi = w.x_center + 0.5 * w.x_width;
  const double z_lo = w.z_min, z_hi = w.z_min + w.z_depth;
  std::vector<std::size_t> keep;
  const auto pts = cloud.points();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    if (p.x >= x_lo && p.x <= x_hi && p.z >= z_lo && p.z <= z_hi && p.y >= w.y_min && p.y <= w.y_max)
      keep.push_back(i);
  }
  return cloud.select(keep);
}

GridResult interpolate_to_grid(const PointCloud& cloud, const GridSpec& spec, double max_match_dist) {
  spec.validate();
  if (!(max_match_dist >= 0.0)) throw RangeError("max_match_dist must be >= 0");
  GridResult out{DepthImage(spec), GridMapping(spec), {}};
  if (cloud.has_labels()) out.labels.assign(spec.cells(), ObjectLabel::background);
  if (cloud.empty()) return out;

  const KdTree2 tree(cloud);
  std::vector<double> z(spec.cells(), 0.0);
  std::vector<std::uint8_t> valid(spec.cells(), 0);
  parallel_for(static_cast<std::size_t>(spec.nx), [&](std::size_t row) {
    const int i = static_cast<int>(row);
    for (int j = 0; j < spec.ny; ++j) {
      const auto [x, y] = cell_center(spec, i, j);
      const auto nn = tree.nearest(x, y);
      if (nn.distance > max_match_dist) continue;
      const auto c = spec.index(i, j);
      z[c] = cloud[nn.index].z;
      valid[c] = 1;
      out.mapping.cell_to_point[c] = static_cast<std::int64_t>(nn.index);
      if (cloud.has_labels()) out.labels[c] = cloud.label(nn.index);
    }
  });
  out.image = DepthImage(spec, std::move(z), std::move(valid));
  return out;
}

DepthImage mask_top_object(const DepthImage& img, std::span<const ObjectLabel> segmap, double single_object_height,
                           double offset) {
  if (segmap.size() != img.spec().cells()) throw ShapeError("segmentation map does not match the depth image");
  DepthImage out = img;
  const double value = single_object_height + offset;
  for (std::size_t c = 0; c < segmap.size(); ++c)
    if (segmap[c] == ObjectLabel::top) out.set(c, value);
  return out;
}

void Config::validate() const {
  crop.validate();
  dbscan.validate();
  GridSpec{grid_nx, grid_ny, grid_dx, grid_dy, 0.0, 0.0}.validate();
  if (!(single_object_height > 0.0)) throw RangeError("single_object_height must be positive");
  if (!(mask_offset >= 0.0)) throw RangeError("mask_offset must be >= 0");
}

Filtered filter_scan(const PointCloud& raw, const Config& cfg) {
  cfg.validate();
  const auto cropped = crop(raw, cfg.crop);
  const auto clusters = dbscan(cropped, cfg.dbscan);
  Filtered f;
  f.cloud = select_object_points(cropped, clusters, cfg.dbscan);
  f.grid = grid_centered_on(f.cloud, cfg.grid_nx, cfg.grid_ny, cfg.grid_dx, cfg.grid_dy);
  return f;
}

PointCloud filter_lenient(const PointCloud& raw, const Config& cfg) {
  cfg.validate();
  const auto cropped = crop(raw, cfg.crop);
  const auto clusters = dbscan(cropped, cfg.dbscan);
  DbscanParams p = cfg.dbscan;
  p.min_total = p.min_subcluster;
  try {
    return select_object_points(cropped, clusters, p);
  } catch (const ScanError&) {
    return PointCloud(std::vector<Point3>{}, std::vector<ObjectLabel>{});
  }
}

}  // namespace ocpi::preprocess
