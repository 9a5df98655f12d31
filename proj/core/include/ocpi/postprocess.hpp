#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ocpi/geometry.hpp"

namespace ocpi::post {

struct OtsuResult {
  int bin = 0;                  // class 0 holds bins < bin
  double threshold = 0.0;       // bin / 256
  double between_class_variance = 0.0;
  bool degenerate = false;      // fewer than two occupied bins
  std::vector<std::uint8_t> foreground;  // 1 where the value's bin >= bin
};

inline constexpr int kOtsuBins = 256;

int otsu_bin_of(double v);
// Histogram Otsu over [0, 1]; ties go to the lowest threshold.
OtsuResult otsu_threshold(std::span<const double> raster);

// Masked cells with a recorded source point keep that point's (x, y);
// others take the cell center. z comes from the inpainted image.
PointCloud backproject(const DepthImage& inpainted, const GridMapping& mapping, const PointCloud& source,
                       std::span<const std::uint8_t> mask);

// Top points first (label top), then lower points (label lower).
PointCloud recombine_scene(const PointCloud& top, const PointCloud& lower);

}  // namespace ocpi::post
