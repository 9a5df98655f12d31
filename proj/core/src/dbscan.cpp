#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "ocpi/errors.hpp"
#include "ocpi/preprocess.hpp"

namespace ocpi::preprocess {

namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9e3779b97f4a7c15ull;
    h ^= static_cast<std::uint64_t>(k.y) * 0xc2b2ae3d27d4eb4full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667b19e3779f9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

// Fixed-radius neighbor lists (including the point itself) in CSR form.
struct NeighborLists {
  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> items;

  std::span<const std::uint32_t> of(std::size_t i) const {
    return {items.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
};

NeighborLists radius_neighbors(const PointCloud& cloud, double eps) {
  const auto pts = cloud.points();
  auto key_of = [eps](const Point3& p) {
    return CellKey{static_cast<std::int64_t>(std::floor(p.x / eps)), static_cast<std::int64_t>(std::floor(p.y / eps)),
                   static_cast<std::int64_t>(std::floor(p.z / eps))};
  };
  std::unordered_map<CellKey, std::vector<std::uint32_t>, CellHash> cells;
  for (std::uint32_t i = 0; i < pts.size(); ++i) cells[key_of(pts[i])].push_back(i);

  const double eps2 = eps * eps;
  NeighborLists out;
  out.offsets.reserve(pts.size() + 1);
  out.offsets.push_back(0);
  std::vector<std::uint32_t> scratch;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    const auto k = key_of(p);
    scratch.clear();
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = cells.find({k.x + dx, k.y + dy, k.z + dz});
          if (it == cells.end()) continue;
          for (auto j : it->second) {
            const auto& q = pts[j];
            const double ex = p.x - q.x, ey = p.y - q.y, ez = p.z - q.z;
            if (ex * ex + ey * ey + ez * ez <= eps2) scratch.push_back(j);
          }
        }
    std::sort(scratch.begin(), scratch.end());
    out.items.insert(out.items.end(), scratch.begin(), scratch.end());
    out.offsets.push_back(out.items.size());
  }
  return out;
}

double dist2(const Point3& a, const Point3& b) {
  const double ex = a.x - b.x, ey = a.y - b.y, ez = a.z - b.z;
  return ex * ex + ey * ey + ez * ez;
}

}  // namespace

void DbscanParams::validate() const {
  if (!(eps > 0.0)) throw RangeError("dbscan eps must be positive");
  if (min_pts < 1) throw RangeError("dbscan min_pts must be >= 1");
  if (min_subcluster > min_total) throw RangeError("min_subcluster must not exceed min_total");
}

std::vector<std::int32_t> dbscan(const PointCloud& cloud, const DbscanParams& p) {
  p.validate();
  const std::size_t n = cloud.size();
  std::vector<std::int32_t> label(n, kNoise);
  if (n == 0) return label;
  const auto nb = radius_neighbors(cloud, p.eps);

  std::vector<char> core(n, 0);
  for (std::size_t i = 0; i < n; ++i) core[i] = nb.of(i).size() >= static_cast<std::size_t>(p.min_pts);

  // Connected components over core points.
  std::int32_t next = 0;
  std::vector<std::uint32_t> stack;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || label[i] != kNoise) continue;
    const std::int32_t id = next++;
    label[i] = id;
    stack.assign(1, static_cast<std::uint32_t>(i));
    while (!stack.empty()) {
      const auto a = stack.back();
      stack.pop_back();
      for (auto b : nb.of(a)) {
        if (core[b] && label[b] == kNoise) {
          label[b] = id;
          stack.push_back(b);
        }
      }
    }
  }

  // Border points: nearest core neighbor decides.
  const auto pts = cloud.points();
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    double best = std::numeric_limits<double>::infinity();
    for (auto j : nb.of(i)) {
      if (!core[j]) continue;
      const double d = dist2(pts[i], pts[j]);
      if (d < best) {  // neighbors are sorted, so ties keep the lowest index
        best = d;
        label[i] = label[j];
      }
    }
  }

  // Renumber clusters by the lowest point index they contain.
  std::vector<std::int32_t> remap(static_cast<std::size_t>(next), kNoise);
  std::int32_t id = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] == kNoise) continue;
    auto& r = remap[static_cast<std::size_t>(label[i])];
    if (r == kNoise) r = id++;
  }
  for (auto& l : label)
    if (l != kNoise) l = remap[static_cast<std::size_t>(l)];
  return label;
}

PointCloud select_object_points(const PointCloud& cloud, std::span<const std::int32_t> clusters, const DbscanParams& p) {
  p.validate();
  if (clusters.size() != cloud.size()) throw ShapeError("cluster labels do not match the cloud");
  std::int32_t max_id = -1;
  for (auto c : clusters) max_id = std::max(max_id, c);
  std::vector<std::size_t> sizes(static_cast<std::size_t>(max_id + 1), 0);
  for (auto c : clusters)
    if (c != kNoise) ++sizes[static_cast<std::size_t>(c)];

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const auto c = clusters[i];
    if (c != kNoise && sizes[static_cast<std::size_t>(c)] >= p.min_subcluster) keep.push_back(i);
  }
  if (keep.size() < p.min_total)
    throw ScanError("scan error: " + std::to_string(keep.size()) + " object points after filtering, need " +
                        std::to_string(p.min_total),
                    keep.size());
  return cloud.select(keep);
}

}  // namespace ocpi::preprocess
