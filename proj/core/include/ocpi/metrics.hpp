#pragma once

#include <span>
#include <string>
#include <vector>

#include "ocpi/tensor.hpp"

namespace ocpi::eval {

struct MetricReport {
  double mse = 0.0;
  double mae = 0.0;
  double psnr = 0.0;  // dB, peak 1, capped
  double ssim = 0.0;
};

inline constexpr double kPsnrCap = 99.0;

double mse(std::span<const double> out, std::span<const double> gt);
double mae(std::span<const double> out, std::span<const double> gt);
double psnr(double mse_value);
// Gaussian-window SSIM (7x7, sigma 1.5, K1 0.01, K2 0.03, range 1) averaged
// over every window fully inside a rows x cols image.
double ssim(std::span<const double> out, std::span<const double> gt, int rows, int cols);

MetricReport metrics(std::span<const double> out, std::span<const double> gt, int rows, int cols);
// One report per batch item of (n, 1, h, w) tensors.
std::vector<MetricReport> metrics(const nn::Tensor& out, const nn::Tensor& gt);

struct Stat {
  double mean = 0.0;
  double variance = 0.0;  // unbiased; 0 for a single report
};

struct Summary {
  std::size_t count = 0;
  Stat mse, mae, psnr, ssim;
};

Summary aggregate(std::span<const MetricReport> reports);

}  // namespace ocpi::eval
