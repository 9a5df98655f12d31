#include "ocpi/config.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "ocpi/errors.hpp"
#include "ocpi/io.hpp"

namespace ocpi {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !std::isfinite(d)) throw ConfigError(key + ": not a number: '" + v + "'");
  return d;
}

long to_long(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long n = 0;
  try {
    n = std::stol(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw ConfigError(key + ": not an integer: '" + v + "'");
  return n;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": not a boolean: '" + v + "'");
}

struct Key {
  std::string section;
  std::string name;
  std::function<void(Config&, const std::string& key, const std::string& v)> set;
  std::function<std::string(const Config&)> get;
};

#define OCPI_DOUBLE(sec, nm, field)                                                                   \
  Key{sec, nm, [](Config& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); }, \
      [](const Config& c) { return fmt(c.field); }}
#define OCPI_INT(sec, nm, field)                                                                                   \
  Key{sec, nm,                                                                                                     \
      [](Config& c, const std::string& k, const std::string& v) {                                                  \
        c.field = static_cast<std::remove_reference_t<decltype(c.field)>>(to_long(k, v));                          \
      },                                                                                                           \
      [](const Config& c) { return std::to_string(c.field); }}
#define OCPI_BOOL(sec, nm, field)                                                                   \
  Key{sec, nm, [](Config& c, const std::string& k, const std::string& v) { c.field = to_bool(k, v); }, \
      [](const Config& c) { return std::string(c.field ? "true" : "false"); }}

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      OCPI_INT("scene", "n", scene.n),
      OCPI_DOUBLE("scene", "line_pitch_x", scene.scanner.line_pitch_x),
      OCPI_DOUBLE("scene", "sample_pitch_y", scene.scanner.sample_pitch_y),
      OCPI_DOUBLE("scene", "height_divergence", scene.scanner.height_divergence),
      OCPI_DOUBLE("scene", "outlier_rate", scene.scanner.outlier_rate),
      OCPI_DOUBLE("scene", "belt_center_y", scene.scanner.belt_center_y),
      OCPI_INT("scene", "half_rays", scene.scanner.half_rays),
      OCPI_DOUBLE("scene", "window_x", scene.scanner.window_x),
      OCPI_DOUBLE("scene", "shadow_margin", scene.scanner.shadow_margin),
      OCPI_BOOL("scene", "clutter_wall", scene.scanner.clutter.wall),
      OCPI_BOOL("scene", "clutter_floor", scene.scanner.clutter.floor),
      OCPI_BOOL("scene", "clutter_rails", scene.scanner.clutter.rails),
      OCPI_DOUBLE("scene", "x_min", scene.space.x_min),
      OCPI_DOUBLE("scene", "x_max", scene.space.x_max),
      OCPI_DOUBLE("scene", "y_min", scene.space.y_min),
      OCPI_DOUBLE("scene", "y_max", scene.space.y_max),
      OCPI_DOUBLE("scene", "offset_min", scene.space.offset_min),
      OCPI_DOUBLE("scene", "offset_max", scene.space.offset_max),
      OCPI_DOUBLE("scene", "max_occlusion", scene.space.max_occlusion),
      OCPI_DOUBLE("scene", "max_tilt", scene.space.max_tilt),
      OCPI_DOUBLE("scene", "max_scene_height", scene.space.max_scene_height),
      OCPI_DOUBLE("scene", "clearance", scene.space.clearance),

      OCPI_DOUBLE("preprocess", "crop_x_center", raster.pre.crop.x_center),
      OCPI_DOUBLE("preprocess", "crop_x_width", raster.pre.crop.x_width),
      OCPI_DOUBLE("preprocess", "crop_z_min", raster.pre.crop.z_min),
      OCPI_DOUBLE("preprocess", "crop_z_depth", raster.pre.crop.z_depth),
      OCPI_DOUBLE("preprocess", "dbscan_eps", raster.pre.dbscan.eps),
      OCPI_INT("preprocess", "dbscan_min_pts", raster.pre.dbscan.min_pts),
      OCPI_INT("preprocess", "min_subcluster", raster.pre.dbscan.min_subcluster),
      OCPI_INT("preprocess", "min_total", raster.pre.dbscan.min_total),
      OCPI_INT("preprocess", "grid_nx", raster.pre.grid_nx),
      OCPI_INT("preprocess", "grid_ny", raster.pre.grid_ny),
      OCPI_DOUBLE("preprocess", "grid_dx", raster.pre.grid_dx),
      OCPI_DOUBLE("preprocess", "grid_dy", raster.pre.grid_dy),
      OCPI_DOUBLE("preprocess", "max_match_dist", raster.pre.max_match_dist),
      OCPI_DOUBLE("preprocess", "single_object_height", raster.pre.single_object_height),
      OCPI_DOUBLE("preprocess", "mask_offset", raster.pre.mask_offset),
      OCPI_DOUBLE("preprocess", "z_max", raster.z_max),

      OCPI_INT("net", "depth", net.depth),
      OCPI_INT("net", "base_channels", net.base_channels),
      OCPI_INT("net", "max_channels", net.max_channels),
      OCPI_BOOL("net", "skip", net.skip),
      OCPI_INT("net", "bottleneck_dim", bottleneck_dim),

      OCPI_DOUBLE("loss", "alpha", loss.alpha),
      OCPI_DOUBLE("loss", "beta", loss.beta),
      OCPI_BOOL("loss", "style_normalized", loss.style_normalized),
      OCPI_BOOL("loss", "masked_pixel", loss.masked_pixel),

      OCPI_INT("train", "lossnet_epochs", plan.lossnet_epochs),
      OCPI_INT("train", "pretrain_epochs", plan.pretrain_epochs),
      OCPI_INT("train", "finetune_epochs", plan.finetune_epochs),
      OCPI_INT("train", "segment_epochs", plan.segment_epochs),
      Key{"train", "pretrain_loss",
          [](Config& c, const std::string&, const std::string& v) { c.plan.pretrain_loss = train::parse_loss_kind(v); },
          [](const Config& c) { return std::string(train::to_string(c.plan.pretrain_loss)); }},
      Key{"train", "finetune_loss",
          [](Config& c, const std::string&, const std::string& v) { c.plan.finetune_loss = train::parse_loss_kind(v); },
          [](const Config& c) { return std::string(train::to_string(c.plan.finetune_loss)); }},
      OCPI_INT("train", "batch_size", plan.batch_size),
      OCPI_DOUBLE("train", "lr", plan.lr),
      OCPI_BOOL("train", "reset_adam_between_phases", plan.reset_adam_between_phases),
      OCPI_DOUBLE("train", "collapse_threshold", plan.collapse_threshold),
      OCPI_INT("train", "collapse_window", plan.collapse_window),
      OCPI_BOOL("train", "stop_on_collapse", plan.stop_on_collapse),

      OCPI_INT("eval", "batch_size", eval.batch_size),
      OCPI_BOOL("eval", "previews", eval.previews),
  };
  return k;
}

#undef OCPI_DOUBLE
#undef OCPI_INT
#undef OCPI_BOOL

const Key* find_key(const std::string& section, const std::string& name) {
  for (const auto& k : keys())
    if (k.section == section && k.name == name) return &k;
  return nullptr;
}

}  // namespace

void Config::validate() const {
  if (scene.n < 1) throw ConfigError("scene.n must be >= 1");
  scene.scanner.validate();
  scene.space.validate();
  raster.validate();
  inpaint_net().validate();
  lossnet().validate();
  loss.validate();
  plan.validate();
  if (eval.batch_size < 1) throw ConfigError("eval.batch_size must be >= 1");
  const int div = 1 << net.depth;
  if (raster.pre.grid_nx % div != 0 || raster.pre.grid_ny % div != 0)
    throw ConfigError("grid size must be divisible by 2^net.depth");
}

nn::UNetConfig Config::inpaint_net() const {
  auto c = net;
  c.in_channels = 1;
  c.out_channels = 1;
  c.head = nn::Head::linear;
  return c;
}

nn::UNetConfig Config::segment_net() const {
  auto c = inpaint_net();
  c.out_channels = 3;
  c.head = nn::Head::softmax;
  return c;
}

nn::LossNetConfig Config::lossnet() const {
  nn::LossNetConfig c;
  c.depth = 4;
  c.base_channels = net.base_channels;
  c.max_channels = net.max_channels;
  c.bottleneck_dim = bottleneck_dim;
  c.height = raster.pre.grid_nx;
  c.width = raster.pre.grid_ny;
  return c;
}

std::string Config::text() const {
  std::ostringstream ss;
  std::string section;
  for (const auto& k : keys()) {
    if (k.section != section) {
      if (!section.empty()) ss << "\n";
      section = k.section;
      ss << "[" << section << "]\n";
    }
    ss << k.name << " = " << k.get(*this) << "\n";
  }
  return ss.str();
}

std::string Config::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : text()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string section;
  int lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    auto line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      static const char* known[] = {"scene", "preprocess", "net", "loss", "train", "eval"};
      if (std::find(std::begin(known), std::end(known), section) == std::end(known))
        throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const auto name = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + "key '" + name + "' outside any section");
    const auto* k = find_key(section, name);
    if (!k) throw ConfigError(where + "unknown key '" + section + "." + name + "'");
    k->set(c, section + "." + name, value);
  }
  c.validate();
  return c;
}

Config Config::load(const std::filesystem::path& path) { return parse(io::read_text(path)); }

}  // namespace ocpi
