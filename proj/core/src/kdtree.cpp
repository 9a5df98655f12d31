#include <algorithm>
#include <cmath>
#include <limits>

#include "ocpi/errors.hpp"
#include "ocpi/preprocess.hpp"

namespace ocpi::preprocess {

KdTree2::KdTree2(const PointCloud& cloud) {
  if (cloud.size() > std::numeric_limits<std::uint32_t>::max()) throw RangeError("cloud too large for KdTree2");
  xs_.reserve(cloud.size());
  ys_.reserve(cloud.size());
  for (const auto& p : cloud.points()) {
    xs_.push_back(p.x);
    ys_.push_back(p.y);
  }
  std::vector<std::uint32_t> idx(cloud.size());
  for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
  nodes_.reserve(idx.size());
  root_ = build(idx, 0, idx.size(), 0);
}

std::int32_t KdTree2::build(std::vector<std::uint32_t>& idx, std::size_t lo, std::size_t hi, int depth) {
  if (lo >= hi) return -1;
  const std::uint8_t axis = static_cast<std::uint8_t>(depth & 1);
  const auto& key = axis == 0 ? xs_ : ys_;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + static_cast<std::ptrdiff_t>(lo), idx.begin() + static_cast<std::ptrdiff_t>(mid),
                   idx.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::uint32_t a, std::uint32_t b) {
                     return key[a] < key[b] || (key[a] == key[b] && a < b);
                   });
  const auto self = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{idx[mid], -1, -1, axis});
  const auto left = build(idx, lo, mid, depth + 1);
  const auto right = build(idx, mid + 1, hi, depth + 1);
  nodes_[static_cast<std::size_t>(self)].left = left;
  nodes_[static_cast<std::size_t>(self)].right = right;
  return self;
}

void KdTree2::search(std::int32_t node, double x, double y, double& best_d2, std::uint32_t& best) const {
  if (node < 0) return;
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  const double dx = x - xs_[n.point], dy = y - ys_[n.point];
  const double d2 = dx * dx + dy * dy;
  if (d2 < best_d2 || (d2 == best_d2 && n.point < best)) {
    best_d2 = d2;
    best = n.point;
  }
  const double diff = n.axis == 0 ? dx : dy;
  search(diff < 0.0 ? n.left : n.right, x, y, best_d2, best);
  // Equal-distance candidates on the far side may carry a lower index.
  if (diff * diff <= best_d2) search(diff < 0.0 ? n.right : n.left, x, y, best_d2, best);
}

Neighbor KdTree2::nearest(double x, double y) const {
  if (root_ < 0) throw RangeError("nearest() on an empty k-d tree");
  double best_d2 = std::numeric_limits<double>::infinity();
  std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
  search(root_, x, y, best_d2, best);
  return {best, std::sqrt(best_d2)};
}

KdTree2 build_kdtree(const PointCloud& cloud) { return KdTree2(cloud); }

}  // namespace ocpi::preprocess
