#include "ocpi/metrics.hpp"

#include <array>
#include <cmath>

#include "ocpi/errors.hpp"

namespace ocpi::eval {

namespace {

constexpr int kWin = 7;

void same_size(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("metric inputs differ in size");
  if (a.empty()) throw ShapeError("metric inputs are empty");
}

std::array<double, kWin * kWin> gaussian_window() {
  std::array<double, kWin * kWin> w{};
  const double sigma = 1.5;
  double total = 0.0;
  for (int r = 0; r < kWin; ++r) {
    for (int c = 0; c < kWin; ++c) {
      const double dr = r - kWin / 2, dc = c - kWin / 2;
      w[r * kWin + c] = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      total += w[r * kWin + c];
    }
  }
  for (auto& v : w) v /= total;
  return w;
}

Stat stat(const std::vector<double>& v) {
  Stat s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) s.variance += (x - s.mean) * (x - s.mean);
    s.variance /= static_cast<double>(v.size() - 1);
  }
  return s;
}

}  // namespace

double mse(std::span<const double> out, std::span<const double> gt) {
  same_size(out, gt);
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += (out[i] - gt[i]) * (out[i] - gt[i]);
  return s / static_cast<double>(out.size());
}

double mae(std::span<const double> out, std::span<const double> gt) {
  same_size(out, gt);
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += std::abs(out[i] - gt[i]);
  return s / static_cast<double>(out.size());
}

double psnr(double mse_value) {
  if (!(mse_value > 0.0)) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse_value));
}

double ssim(std::span<const double> a, std::span<const double> b, int rows, int cols) {
  same_size(a, b);
  if (rows < kWin || cols < kWin || static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) != a.size())
    throw ShapeError("ssim needs an image of at least 7x7 matching its data");
  static const auto w = gaussian_window();
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  for (int r0 = 0; r0 + kWin <= rows; ++r0) {
    for (int q0 = 0; q0 + kWin <= cols; ++q0) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int r = 0; r < kWin; ++r) {
        for (int c = 0; c < kWin; ++c) {
          const std::size_t k = static_cast<std::size_t>(r0 + r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(q0 + c);
          const double wt = w[r * kWin + c];
          mx += wt * a[k];
          my += wt * b[k];
          xx += wt * a[k] * a[k];
          yy += wt * b[k] * b[k];
          xy += wt * a[k] * b[k];
        }
      }
      const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return total / (static_cast<double>(rows - kWin + 1) * static_cast<double>(cols - kWin + 1));
}

MetricReport metrics(std::span<const double> out, std::span<const double> gt, int rows, int cols) {
  MetricReport r;
  r.mse = mse(out, gt);
  r.mae = mae(out, gt);
  r.psnr = psnr(r.mse);
  r.ssim = ssim(out, gt, rows, cols);
  return r;
}

std::vector<MetricReport> metrics(const nn::Tensor& out, const nn::Tensor& gt) {
  if (out.shape() != gt.shape() || out.shape().c != 1) throw ShapeError("metrics need matching (n, 1, h, w) tensors");
  const auto& s = out.shape();
  std::vector<MetricReport> reports;
  for (int n = 0; n < s.n; ++n)
    reports.push_back(metrics(std::span<const double>(out.item(n), s.plane()), std::span<const double>(gt.item(n), s.plane()),
                              s.h, s.w));
  return reports;
}

Summary aggregate(std::span<const MetricReport> reports) {
  if (reports.empty()) throw RangeError("aggregate of no reports");
  std::vector<double> m, a, p, s;
  for (const auto& r : reports) {
    m.push_back(r.mse);
    a.push_back(r.mae);
    p.push_back(r.psnr);
    s.push_back(r.ssim);
  }
  return Summary{reports.size(), stat(m), stat(a), stat(p), stat(s)};
}

}  // namespace ocpi::eval
