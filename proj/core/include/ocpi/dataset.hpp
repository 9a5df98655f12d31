#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ocpi/preprocess.hpp"
#include "ocpi/scene.hpp"
#include "ocpi/tensor.hpp"

namespace ocpi::data {

struct RasterConfig {
  preprocess::Config pre;
  // Normalization ceiling; must exceed the masking height
  // single_object_height + mask_offset.
  double z_max = 24.0;

  void validate() const;
  // 64 x 32 grid covering the same area as the full 256 x 64 one.
  static RasterConfig desk();
  static RasterConfig paper();
};

/// One training example on the grid of its occluded scan.
struct RasterSample {
  std::size_t index = 0;
  GridSpec grid;
  std::vector<double> input;          // occluded raster with the top object masked
  std::vector<double> seg_input;      // occluded raster as scanned
  std::vector<double> target;         // ground-truth lower object
  std::vector<std::uint8_t> classes;  // ObjectLabel per cell
  std::vector<std::uint8_t> masked;   // cells overwritten by the top mask
  std::vector<std::uint8_t> gt_valid;
};

// Raises ScanError when the occluded scan fails the cluster thresholds.
RasterSample make_sample(const scene::ScenePair& pair, const RasterConfig& cfg, std::size_t index);

struct RasterDataset {
  int height = 0;  // grid nx
  int width = 0;   // grid ny
  std::vector<RasterSample> train, validation, test;
  std::size_t dropped = 0;  // scans rejected by filtering
};

// Generates scenes in memory.
RasterDataset build_dataset(const scene::DatasetOptions& opts, const RasterConfig& cfg);
// Reads a generated dataset directory (manifest.txt + clouds).
RasterDataset load_dataset(const std::filesystem::path& dir, const RasterConfig& cfg);

enum class Field { input, seg_input, target };

// (count, 1, height, width) tensor of the selected samples.
nn::Tensor stack(const std::vector<RasterSample>& samples, Field field, std::span<const std::size_t> order, int height,
                 int width);
nn::Tensor stack(const std::vector<RasterSample>& samples, Field field, int height, int width);

}  // namespace ocpi::data
