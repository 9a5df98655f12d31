#pragma once

#include <vector>

#include "ocpi/networks.hpp"
#include "ocpi/postprocess.hpp"
#include "ocpi/preprocess.hpp"

namespace ocpi::pipeline {

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  // One label per grid cell.
  virtual std::vector<ObjectLabel> segment(const DepthImage& image) const = 0;
};

class Inpainter {
 public:
  virtual ~Inpainter() = default;
  virtual DepthImage inpaint(const DepthImage& masked) const = 0;
};

// Labels every valid cell as the lower object.
class NoTopSegmenter final : public Segmenter {
 public:
  std::vector<ObjectLabel> segment(const DepthImage& image) const override;
};

// Returns fixed labels, e.g. those interpolated from a labeled scan.
class FixedSegmenter final : public Segmenter {
 public:
  explicit FixedSegmenter(std::vector<ObjectLabel> labels) : labels_(std::move(labels)) {}
  std::vector<ObjectLabel> segment(const DepthImage& image) const override;

 private:
  std::vector<ObjectLabel> labels_;
};

class IdentityInpainter final : public Inpainter {
 public:
  DepthImage inpaint(const DepthImage& masked) const override { return masked; }
};

class NetSegmenter final : public Segmenter {
 public:
  NetSegmenter(nn::UNet net, double z_max);
  std::vector<ObjectLabel> segment(const DepthImage& image) const override;

 private:
  nn::UNet net_;
  double z_max_;
};

class NetInpainter final : public Inpainter {
 public:
  NetInpainter(nn::UNet net, double z_max);
  DepthImage inpaint(const DepthImage& masked) const override;

 private:
  nn::UNet net_;
  double z_max_;
};

struct Inference {
  PointCloud source;  // filtered object points
  preprocess::GridResult grid;
  std::vector<ObjectLabel> segmap;
  DepthImage masked;
  DepthImage inpainted;
  post::OtsuResult otsu;
  PointCloud top;
  PointCloud lower;
  PointCloud recombined;
};

// crop -> dbscan -> select -> interpolate -> segment -> mask -> inpaint ->
// otsu -> backproject -> recombine. Raises ScanError on undersized scans.
Inference infer(const PointCloud& raw, const preprocess::Config& cfg, double z_max, const Segmenter& seg,
                const Inpainter& inp);

// Grid cell nearest to (x, y), clamped to the grid.
std::size_t nearest_cell(const GridSpec& spec, double x, double y);

}  // namespace ocpi::pipeline
