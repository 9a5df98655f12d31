#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ocpi/dataset.hpp"
#include "ocpi/losses.hpp"
#include "ocpi/networks.hpp"

namespace ocpi::train {

enum class LossKind { mse, mae, psbl };

const char* to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

struct TrainPlan {
  int lossnet_epochs = 300;
  int pretrain_epochs = 200;  // 0 trains from scratch with finetune_loss
  int finetune_epochs = 200;
  int segment_epochs = 200;
  LossKind pretrain_loss = LossKind::mse;
  LossKind finetune_loss = LossKind::psbl;
  int batch_size = 16;
  double lr = 1e-4;
  bool reset_adam_between_phases = true;
  double collapse_threshold = 0.02;
  int collapse_window = 10;  // epochs checked at the start of every phase
  bool stop_on_collapse = true;

  void validate() const;
  TrainPlan scaled(double multiplier) const;  // epoch counts times multiplier, at least 1
  static TrainPlan paper();
  static TrainPlan desk();  // paper plan x 0.25
};

struct CollapseVerdict {
  bool collapsed = false;
  int epoch = 0;
  double mean_abs_output = 0.0;
};

// Mean |output| over cells where the target object is present.
double mean_abs_on_object(const nn::Tensor& output, const std::vector<data::RasterSample>& samples);
CollapseVerdict detect_collapse(const nn::Tensor& output, const std::vector<data::RasterSample>& samples, int epoch,
                                double threshold = 0.02);

struct Evaluation {
  double psnr = 0.0;        // mean per-image
  double ssim = 0.0;
  double mae = 0.0;
  double masked_mae = 0.0;  // over cells hidden by the top mask
  double mean_abs_on_object = 0.0;
};

nn::Tensor predict_batched(const nn::UNet& net, const nn::Tensor& x, int batch_size);
Evaluation evaluate_inpainter(const nn::UNet& net, const std::vector<data::RasterSample>& samples, int height, int width,
                              int batch_size = 16);
// Scores the masked input itself as the prediction.
Evaluation evaluate_copy_baseline(const std::vector<data::RasterSample>& samples, int height, int width);

struct HistoryRow {
  std::string phase;
  int epoch = 0;  // within the phase; 0 evaluates before any update
  double train_loss = 0.0;
  double train_pixel = 0.0;
  double train_perceptual = 0.0;
  double train_style = 0.0;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
  double val_metric = 0.0;  // val loss (lossnet) or pixel accuracy (segmenter); masked MAE otherwise
  double best_val = 0.0;    // running maximum of val_psnr (val_metric for the segmenter)
};

std::string format_history(const std::vector<HistoryRow>& rows);

struct LossNetResult {
  nn::LossNet net;
  std::vector<HistoryRow> history;
};

LossNetResult train_lossnet(const data::RasterDataset& ds, const nn::LossNetConfig& cfg, const TrainPlan& plan,
                            std::uint64_t seed);

struct InpaintResult {
  nn::UNet best;
  int best_epoch = 0;  // within the last phase
  double best_psnr = 0.0;
  std::vector<HistoryRow> history;
  // Without a collapse, epoch and mean_abs_output describe the lowest value
  // seen inside the checked windows.
  CollapseVerdict collapse;
};

// `start` continues from existing weights instead of a fresh init.
InpaintResult train_inpainter(const data::RasterDataset& ds, const nn::UNetConfig& cfg, const TrainPlan& plan,
                              const nn::LossWeights& w, const nn::LossNet* lossnet, std::uint64_t seed,
                              const nn::UNet* start = nullptr);

struct SegmentResult {
  nn::UNet best;
  int best_epoch = 0;
  double best_accuracy = 0.0;
  std::vector<HistoryRow> history;
};

double pixel_accuracy(const nn::UNet& net, const std::vector<data::RasterSample>& samples, int height, int width,
                      int batch_size = 16);
SegmentResult train_segmenter(const data::RasterDataset& ds, const nn::UNetConfig& cfg, const TrainPlan& plan,
                              std::uint64_t seed);

struct Trial {
  double alpha = 0.0;
  double beta = 0.0;
  double psnr = 0.0;
  bool collapsed = false;
};

struct SearchResult {
  std::vector<Trial> trials;
  std::size_t best = 0;
  nn::LossWeights best_weights() const;
};

// Log-uniform alpha and beta in [lo, hi]; each trial fine-tunes `start`
// (or trains from scratch when null) with plan's finetune phase.
SearchResult search_alpha_beta(const data::RasterDataset& ds, const nn::UNetConfig& cfg, const TrainPlan& plan,
                               const nn::LossNet& lossnet, int n_trials, std::uint64_t seed,
                               const nn::UNet* start = nullptr, double lo = 0.1, double hi = 1000.0,
                               bool style_normalized = true);

std::string format_trials(const SearchResult& r);

}  // namespace ocpi::train
