#include "ocpi/dataset.hpp"

#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "ocpi/errors.hpp"
#include "ocpi/io.hpp"
#include "ocpi/parallel.hpp"

namespace ocpi::data {

void RasterConfig::validate() const {
  pre.validate();
  if (!(z_max > pre.single_object_height + pre.mask_offset))
    throw ConfigError("z_max must exceed single_object_height + mask_offset");
}

RasterConfig RasterConfig::desk() {
  RasterConfig c;
  c.pre.grid_nx = 64;
  c.pre.grid_ny = 32;
  c.pre.grid_dx = 1.2;
  c.pre.grid_dy = 2.2;
  return c;
}

RasterConfig RasterConfig::paper() { return RasterConfig{}; }

namespace {

std::vector<double> normalized(const DepthImage& img, double z_max) {
  // Scanner noise can dip marginally below the belt; clamp to the raster range.
  std::vector<double> z(img.z().begin(), img.z().end());
  std::vector<std::uint8_t> valid(img.valid().begin(), img.valid().end());
  for (auto& v : z) v = std::clamp(v, 0.0, z_max);
  return normalize_depth(DepthImage(img.spec(), std::move(z), std::move(valid)), z_max);
}

RasterDataset split(std::vector<std::optional<RasterSample>>& samples, const RasterConfig& cfg) {
  RasterDataset ds;
  ds.height = cfg.pre.grid_nx;
  ds.width = cfg.pre.grid_ny;
  const auto sp = scene::DatasetSplit::for_count(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i]) {
      ++ds.dropped;
      continue;
    }
    auto& dst = sp.is_train(i) ? ds.train : (sp.is_validation(i) ? ds.validation : ds.test);
    dst.push_back(std::move(*samples[i]));
  }
  return ds;
}

}  // namespace

RasterSample make_sample(const scene::ScenePair& pair, const RasterConfig& cfg, std::size_t index) {
  cfg.validate();
  const auto filtered = preprocess::filter_scan(pair.occluded_scan, cfg.pre);
  const double match = cfg.pre.match_distance();
  const auto occ = preprocess::interpolate_to_grid(filtered.cloud, filtered.grid, match);
  const auto gt_cloud = preprocess::filter_lenient(pair.ground_truth_lower, cfg.pre);
  const auto gt = preprocess::interpolate_to_grid(gt_cloud, filtered.grid, match);
  const auto masked = preprocess::mask_top_object(occ.image, occ.labels, cfg.pre.single_object_height, cfg.pre.mask_offset);

  RasterSample s;
  s.index = index;
  s.grid = filtered.grid;
  s.input = normalized(masked, cfg.z_max);
  s.seg_input = normalized(occ.image, cfg.z_max);
  s.target = normalized(gt.image, cfg.z_max);
  s.classes.resize(occ.labels.size());
  s.masked.resize(occ.labels.size());
  for (std::size_t c = 0; c < occ.labels.size(); ++c) {
    s.classes[c] = static_cast<std::uint8_t>(occ.labels[c]);
    s.masked[c] = occ.labels[c] == ObjectLabel::top;
  }
  s.gt_valid.assign(gt.image.valid().begin(), gt.image.valid().end());
  return s;
}

RasterDataset build_dataset(const scene::DatasetOptions& opts, const RasterConfig& cfg) {
  cfg.validate();
  std::vector<std::optional<RasterSample>> samples(opts.n);
  parallel_for(opts.n, [&](std::size_t i) {
    try {
      samples[i] = make_sample(scene::generate_sample(opts, i), cfg, i);
    } catch (const ScanError&) {
    }
  });
  return split(samples, cfg);
}

RasterDataset load_dataset(const std::filesystem::path& dir, const RasterConfig& cfg) {
  cfg.validate();
  std::map<std::string, std::string> manifest;
  std::istringstream ss(io::read_text(dir / "manifest.txt"));
  for (std::string line; std::getline(ss, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) manifest[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (!manifest.count("n")) throw IoError(dir.string() + ": manifest lacks n");
  const std::size_t n = std::stoull(manifest["n"]);
  std::vector<std::optional<RasterSample>> samples(n);
  parallel_for(n, [&](std::size_t i) {
    scene::ScenePair pair;
    const auto stem = scene::sample_stem(i);
    pair.occluded_scan = io::read_cloud(dir / (stem + "_occluded.ocpc"));
    pair.ground_truth_lower = io::read_cloud(dir / (stem + "_gt.ocpc"));
    try {
      samples[i] = make_sample(pair, cfg, i);
    } catch (const ScanError&) {
    }
  });
  return split(samples, cfg);
}

nn::Tensor stack(const std::vector<RasterSample>& samples, Field field, std::span<const std::size_t> order, int height,
                 int width) {
  nn::Tensor t(nn::Shape{static_cast<int>(order.size()), 1, height, width});
  const std::size_t plane = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& s = samples.at(order[k]);
    const auto& src = field == Field::input ? s.input : (field == Field::seg_input ? s.seg_input : s.target);
    if (src.size() != plane) throw ShapeError("raster sample does not match the dataset grid");
    std::copy(src.begin(), src.end(), t.item(static_cast<int>(k)));
  }
  return t;
}

nn::Tensor stack(const std::vector<RasterSample>& samples, Field field, int height, int width) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return stack(samples, field, order, height, width);
}

}  // namespace ocpi::data
