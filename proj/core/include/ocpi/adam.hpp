#pragma once

#include <vector>

#include "ocpi/networks.hpp"

namespace ocpi::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moments are sized on the first step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamSet& params, const std::vector<Tensor>& grads);
  void reset();
  long steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace ocpi::nn
