#pragma once

#include <filesystem>
#include <string>

#include "ocpi/dataset.hpp"
#include "ocpi/losses.hpp"
#include "ocpi/networks.hpp"
#include "ocpi/scene.hpp"
#include "ocpi/training.hpp"

namespace ocpi {

struct EvalConfig {
  int batch_size = 16;
  bool previews = false;  // PGM renderings next to the CSV
};

/// Every tunable of a run. Text form: [section] headers and key = value
/// lines; '#' starts a comment.
struct Config {
  scene::DatasetOptions scene;
  data::RasterConfig raster = data::RasterConfig::desk();
  nn::UNetConfig net = nn::UNetConfig::inpainting();
  int bottleneck_dim = 16;
  nn::LossWeights loss;
  train::TrainPlan plan = train::TrainPlan::desk();
  EvalConfig eval;

  void validate() const;
  nn::UNetConfig inpaint_net() const;
  nn::UNetConfig segment_net() const;
  nn::LossNetConfig lossnet() const;

  // Canonical text listing every key; parse(text()) reproduces the config.
  std::string text() const;
  std::string hash() const;  // 16 hex digits of FNV-1a over text()

  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);
};

}  // namespace ocpi
