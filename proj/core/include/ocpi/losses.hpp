#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ocpi/networks.hpp"

namespace ocpi::nn {

struct LossWeights {
  double alpha = 0.715;
  double beta = 6.21;
  bool style_normalized = true;
  bool masked_pixel = false;  // L_pixel over unmasked cells only

  void validate() const;
};

struct LossReport {
  double pixel = 0.0;
  double perceptual = 0.0;
  double style = 0.0;
  double total = 0.0;
};

// Plain values. Batched tensors are averaged over items.
double pixel_loss(const Tensor& out, const Tensor& gt);
double mse_loss(const Tensor& out, const Tensor& gt);
// Per-item gram matrices, shape (n, 1, C, C).
Tensor gram(const Tensor& psi);
double perceptual_loss(const std::vector<Tensor>& out, const std::vector<Tensor>& gt);
// Unnormalized sum over items of |G_out - G_gt|, per layer, divided by n.
std::vector<double> style_layer_terms(const std::vector<Tensor>& out, const std::vector<Tensor>& gt);
double style_loss(const std::vector<Tensor>& out, const std::vector<Tensor>& gt, bool normalized);

// Tape versions; values are computed by the same arithmetic as above.
// Targets, masks and gt features are referenced, not copied: keep them alive
// until backward() has run.
Var l1_mean(Tape& t, Var a, const Tensor& target);
// Mean over entries with keep != 0 (keep has one entry per tensor element).
Var l1_mean_masked(Tape& t, Var a, const Tensor& target, std::span<const std::uint8_t> keep);
Var sq_mean(Tape& t, Var a, const Tensor& target);
Var gram(Tape& t, Var psi);
Var perceptual_loss(Tape& t, const FeatureStack& out, const std::vector<Tensor>& gt);
Var style_loss(Tape& t, const FeatureStack& out, const std::vector<Tensor>& gt_grams, bool normalized);

// Loss-network quantities of a ground-truth batch, reused across epochs.
struct GtFeatures {
  std::vector<Tensor> maps;
  std::vector<Tensor> grams;
};
GtFeatures gt_features(const LossNet& lossnet, const Tensor& gt);

struct PsblResult {
  Var total;
  LossReport report;
};

// keep: cells counted by the masked pixel variant (ignored unless enabled).
PsblResult psbl(Tape& t, Var out, const Tensor& gt, const GtFeatures& gtf, const LossNet& lossnet,
                const LossWeights& w, std::span<const std::uint8_t> keep = {});
LossReport psbl_value(const Tensor& out, const Tensor& gt, const LossNet& lossnet, const LossWeights& w);

}  // namespace ocpi::nn
