#include "ocpi/postprocess.hpp"

#include <array>
#include <cmath>

#include "ocpi/errors.hpp"

namespace ocpi::post {

int otsu_bin_of(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw RangeError("otsu input outside [0, 1]: " + std::to_string(v));
  return std::min(static_cast<int>(v * kOtsuBins), kOtsuBins - 1);
}

OtsuResult otsu_threshold(std::span<const double> raster) {
  std::array<std::int64_t, kOtsuBins> hist{};
  for (double v : raster) ++hist[static_cast<std::size_t>(otsu_bin_of(v))];
  std::int64_t n = 0, s = 0;
  for (int b = 0; b < kOtsuBins; ++b) {
    n += hist[b];
    s += hist[b] * (2 * b + 1);
  }
  // Score (S0*n1 - S1*n0)^2 / (n0*n1) is proportional to the between-class
  // variance with bin-center values (2b+1)/512; compared exactly as fractions.
  using i128 = __int128;
  OtsuResult r;
  i128 best_num = -1, best_den = 1;
  std::int64_t n0 = 0, s0 = 0;
  for (int k = 1; k < kOtsuBins; ++k) {
    n0 += hist[k - 1];
    s0 += hist[k - 1] * (2 * (k - 1) + 1);
    const std::int64_t n1 = n - n0, s1 = s - s0;
    if (n0 == 0 || n1 == 0) continue;
    const i128 d = static_cast<i128>(s0) * n1 - static_cast<i128>(s1) * n0;
    const i128 num = d * d, den = static_cast<i128>(n0) * n1;
    if (best_num < 0 || num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      r.bin = k;
    }
  }
  r.foreground.assign(raster.size(), 0);
  if (best_num <= 0) {
    r.degenerate = true;
    return r;
  }
  r.threshold = static_cast<double>(r.bin) / kOtsuBins;
  const double nn = static_cast<double>(n);
  r.between_class_variance =
      static_cast<double>(best_num) / static_cast<double>(best_den) / (512.0 * 512.0) / (nn * nn);
  for (std::size_t i = 0; i < raster.size(); ++i) r.foreground[i] = otsu_bin_of(raster[i]) >= r.bin;
  return r;
}

PointCloud backproject(const DepthImage& inpainted, const GridMapping& mapping, const PointCloud& source,
                       std::span<const std::uint8_t> mask) {
  const auto& spec = inpainted.spec();
  if (!(mapping.spec == spec) || mapping.cell_to_point.size() != spec.cells() || mask.size() != spec.cells())
    throw ShapeError("backproject: raster, mapping and mask disagree");
  mapping.validate_against(source);
  PointCloud out;
  for (int i = 0; i < spec.nx; ++i) {
    for (int j = 0; j < spec.ny; ++j) {
      const auto cell = spec.index(i, j);
      if (!mask[cell]) continue;
      const double z = inpainted.z()[cell];
      const auto src = mapping.cell_to_point[cell];
      if (src != GridMapping::kNoPoint) {
        const auto& p = source[static_cast<std::size_t>(src)];
        out.push_back(Point3{p.x, p.y, z});
      } else {
        const auto [x, y] = cell_center(spec, i, j);
        out.push_back(Point3{x, y, z});
      }
    }
  }
  return out;
}

PointCloud recombine_scene(const PointCloud& top, const PointCloud& lower) {
  std::vector<Point3> pts;
  std::vector<ObjectLabel> labels;
  pts.reserve(top.size() + lower.size());
  for (const auto& p : top.points()) {
    pts.push_back(p);
    labels.push_back(ObjectLabel::top);
  }
  for (const auto& p : lower.points()) {
    pts.push_back(p);
    labels.push_back(ObjectLabel::lower);
  }
  return PointCloud(std::move(pts), std::move(labels));
}

}  // namespace ocpi::post
