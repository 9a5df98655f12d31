#include "ocpi/pipeline.hpp"

#include <cmath>

#include "ocpi/errors.hpp"
#include "ocpi/ops.hpp"

namespace ocpi::pipeline {

namespace {

nn::Tensor as_tensor(const DepthImage& img, double z_max) {
  const auto r = normalize_depth(img, z_max);
  return nn::Tensor(nn::Shape{1, 1, img.spec().nx, img.spec().ny}, r);
}

}  // namespace

std::vector<ObjectLabel> NoTopSegmenter::segment(const DepthImage& image) const {
  std::vector<ObjectLabel> out(image.spec().cells(), ObjectLabel::background);
  for (std::size_t c = 0; c < out.size(); ++c)
    if (image.valid()[c]) out[c] = ObjectLabel::lower;
  return out;
}

std::vector<ObjectLabel> FixedSegmenter::segment(const DepthImage& image) const {
  if (labels_.size() != image.spec().cells()) throw ShapeError("fixed segmentation does not match the grid");
  return labels_;
}

NetSegmenter::NetSegmenter(nn::UNet net, double z_max) : net_(std::move(net)), z_max_(z_max) {
  if (net_.config().head != nn::Head::softmax || net_.config().out_channels != 3)
    throw ConfigError("segmentation network needs a 3-class softmax head");
}

std::vector<ObjectLabel> NetSegmenter::segment(const DepthImage& image) const {
  const auto classes = nn::argmax_classes(net_.predict(as_tensor(image, z_max_)));
  std::vector<ObjectLabel> out(classes.size());
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c] = image.valid()[c] ? static_cast<ObjectLabel>(classes[c]) : ObjectLabel::background;
  return out;
}

NetInpainter::NetInpainter(nn::UNet net, double z_max) : net_(std::move(net)), z_max_(z_max) {
  if (net_.config().head != nn::Head::linear || net_.config().out_channels != 1)
    throw ConfigError("inpainting network needs a single linear output");
}

DepthImage NetInpainter::inpaint(const DepthImage& masked) const {
  auto out = net_.predict(as_tensor(masked, z_max_));
  for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  const std::vector<std::uint8_t> all(masked.spec().cells(), 1);
  return denormalize_depth(out.data(), z_max_, masked.spec(), all);
}

std::size_t nearest_cell(const GridSpec& spec, double x, double y) {
  const auto i = std::clamp(std::lround((x - spec.x0) / spec.dx), 0L, static_cast<long>(spec.nx - 1));
  const auto j = std::clamp(std::lround((y - spec.y0) / spec.dy), 0L, static_cast<long>(spec.ny - 1));
  return spec.index(static_cast<int>(i), static_cast<int>(j));
}

Inference infer(const PointCloud& raw, const preprocess::Config& cfg, double z_max, const Segmenter& seg,
                const Inpainter& inp) {
  Inference r;
  const auto filtered = preprocess::filter_scan(raw, cfg);
  r.source = filtered.cloud;
  r.grid = preprocess::interpolate_to_grid(r.source, filtered.grid, cfg.match_distance());
  r.segmap = seg.segment(r.grid.image);
  r.masked = preprocess::mask_top_object(r.grid.image, r.segmap, cfg.single_object_height, cfg.mask_offset);
  r.inpainted = inp.inpaint(r.masked);
  if (!(r.inpainted.spec() == r.masked.spec())) throw ShapeError("inpainter changed the grid");
  r.otsu = post::otsu_threshold(normalize_depth(r.inpainted, z_max));
  r.lower = post::backproject(r.inpainted, r.grid.mapping, r.source, r.otsu.foreground);
  for (const auto& p : r.source.points())
    if (r.segmap[nearest_cell(filtered.grid, p.x, p.y)] == ObjectLabel::top) r.top.push_back(p);
  r.recombined = post::recombine_scene(r.top, r.lower);
  return r;
}

}  // namespace ocpi::pipeline
