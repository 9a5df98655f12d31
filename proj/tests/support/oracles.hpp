#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They favour directness over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "ocpi/geometry.hpp"
#include "ocpi/rng.hpp"
#include "ocpi/tape.hpp"

namespace oracle {

// Density clustering from the definitions: core points have at least
// min_pts points (themselves included) within eps; clusters are the
// connected components of the core-core eps graph; a border point belongs to
// its nearest core point's cluster (lowest index on ties); ids follow the
// lowest point index of each cluster.
inline std::vector<std::int32_t> dbscan(const ocpi::PointCloud& cloud, double eps, int min_pts) {
  const std::size_t n = cloud.size();
  auto d2 = [&](std::size_t a, std::size_t b) {
    const auto& p = cloud[a];
    const auto& q = cloud[b];
    const double ex = p.x - q.x, ey = p.y - q.y, ez = p.z - q.z;
    return ex * ex + ey * ey + ez * ez;
  };
  const double eps2 = eps * eps;
  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    int count = 0;
    for (std::size_t j = 0; j < n; ++j) count += d2(i, j) <= eps2;
    core[i] = count >= min_pts;
  }
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  std::function<std::size_t(std::size_t)> find = [&](std::size_t a) {
    return parent[a] == a ? a : parent[a] = find(parent[a]);
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (core[i] && core[j] && d2(i, j) <= eps2) parent[find(i)] = find(j);

  std::vector<std::int64_t> owner(n, -1);  // representative core point
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) {
      owner[i] = static_cast<std::int64_t>(find(i));
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!core[j] || d2(i, j) > eps2) continue;
      if (d2(i, j) < best) {
        best = d2(i, j);
        owner[i] = static_cast<std::int64_t>(find(j));
      }
    }
  }
  std::vector<std::int32_t> ids(n, -1);
  std::vector<std::int32_t> by_root(n, -1);
  std::int32_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (owner[i] < 0) continue;
    auto& id = by_root[static_cast<std::size_t>(owner[i])];
    if (id < 0) id = next++;
    ids[i] = id;
  }
  return ids;
}

struct Nearest {
  std::size_t index;
  double distance;
};

inline Nearest nearest_linear(const ocpi::PointCloud& cloud, double x, double y) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  double best2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double dx = cloud[i].x - x, dy = cloud[i].y - y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best2) {
      best2 = d2;
      best = {i, std::sqrt(d2)};
    }
  }
  return best;
}

// Exhaustive Otsu: for each candidate k in 1..255 split the raw values by
// bin (floor(256 v), capped at 255) and score the between-class variance of
// bin-center values as the exact rational (S0 n1 - S1 n0)^2 / (n0 n1),
// S = sum of (2 bin + 1). Returns (best k, or 0 if nothing separates).
inline int otsu_exhaustive(std::span<const double> values) {
  using i128 = __int128;
  int best_k = 0;
  i128 best_num = 0, best_den = 1;
  for (int k = 1; k < 256; ++k) {
    std::int64_t n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (double v : values) {
      const int b = std::min(static_cast<int>(v * 256.0), 255);
      if (b < k) {
        ++n0;
        s0 += 2 * b + 1;
      } else {
        ++n1;
        s1 += 2 * b + 1;
      }
    }
    if (n0 == 0 || n1 == 0) continue;
    const i128 d = static_cast<i128>(s0) * n1 - static_cast<i128>(s1) * n0;
    const i128 num = d * d, den = static_cast<i128>(n0) * n1;
    if (num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best_k = k;
    }
  }
  return best_k;
}

// Central finite differences of a scalar function of several tensors.
// Returns the norm-wise relative error between analytic and numeric
// gradients over every element of every input.
struct GradCheck {
  double rel_error = 0.0;
  double max_abs_diff = 0.0;
  std::size_t checked = 0;
  // Entries whose [x - h, x + h] straddles a kink (relu, max pooling, |.|),
  // found by disagreeing one-sided differences. Only counted when
  // skip_kinks is set; they are left out of rel_error.
  std::size_t kinks = 0;
  // Kink entries where the analytic value matches neither one-sided slope.
  std::size_t kinks_unmatched = 0;
};

using ScalarFn = std::function<ocpi::nn::Var(ocpi::nn::Tape&, const std::vector<ocpi::nn::Var>&)>;

inline GradCheck check_gradient(const ScalarFn& f, std::vector<ocpi::nn::Tensor> inputs, double h = 1e-5,
                                std::size_t max_elements_per_input = std::numeric_limits<std::size_t>::max(),
                                bool skip_kinks = false) {
  using namespace ocpi::nn;
  std::vector<Tensor> analytic;
  {
    Tape t;
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(t.parameter(x));
    const Var y = f(t, vars);
    t.backward(y);
    for (std::size_t k = 0; k < vars.size(); ++k)
      analytic.push_back(t.has_grad(vars[k]) ? t.grad(vars[k]) : Tensor(inputs[k].shape()));
  }
  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape t;
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(t.constant(x));
    return t.value(f(t, vars))[0];
  };
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  const double f0 = skip_kinks ? eval(inputs) : 0.0;
  GradCheck r;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::size_t count = std::min(inputs[k].size(), max_elements_per_input);
    for (std::size_t i = 0; i < count; ++i) {
      const double x0 = inputs[k][i];
      inputs[k][i] = x0 + h;
      const double fp = eval(inputs);
      inputs[k][i] = x0 - h;
      const double fm = eval(inputs);
      inputs[k][i] = x0;
      const double num = (fp - fm) / (2.0 * h);
      const double an = analytic[k][i];
      ++r.checked;
      if (skip_kinks) {
        const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
        const double scale = std::max({std::abs(fwd), std::abs(bwd), 1e-3});
        if (std::abs(fwd - bwd) > 1e-3 * scale) {
          ++r.kinks;
          r.kinks_unmatched += std::min(std::abs(an - fwd), std::abs(an - bwd)) > 1e-3 * scale;
          continue;
        }
      }
      diff2 += (num - an) * (num - an);
      a2 += an * an;
      n2 += num * num;
      r.max_abs_diff = std::max(r.max_abs_diff, std::abs(num - an));
    }
  }
  const double scale = std::max(std::sqrt(std::max(a2, n2)), 1e-300);
  r.rel_error = std::sqrt(diff2) / scale;
  return r;
}

inline ocpi::nn::Tensor random_tensor(const ocpi::nn::Shape& s, ocpi::Rng& rng, double lo = -1.0, double hi = 1.0) {
  ocpi::nn::Tensor t(s);
  for (auto& v : t.data()) v = ocpi::uniform(rng, lo, hi);
  return t;
}

// Values with magnitude in [min_abs, max_abs] and random sign: keeps inputs
// away from the kinks of relu and |x|.
inline ocpi::nn::Tensor away_from_zero(const ocpi::nn::Shape& s, ocpi::Rng& rng, double min_abs = 0.05,
                                       double max_abs = 1.0) {
  ocpi::nn::Tensor t(s);
  for (auto& v : t.data()) {
    const double m = ocpi::uniform(rng, min_abs, max_abs);
    v = (rng() & 1) ? m : -m;
  }
  return t;
}

}  // namespace oracle
