#include "ocpi/scene.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "ocpi/errors.hpp"
#include "ocpi/io.hpp"
#include "ocpi/parallel.hpp"

namespace ocpi::scene {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSurveyStep = 0.25;  // mm, object-frame sampling for settle/max height

template <class... Ts>
struct overloaded : Ts... { using Ts::operator()...; };
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Visits object-frame sample positions covering the closed footprint.
template <class F>
void survey(const ObjectModel& m, F&& f) {
  const int nu = static_cast<int>(std::ceil(m.width_x / kSurveyStep));
  const int nv = static_cast<int>(std::ceil(m.width_y / kSurveyStep));
  for (int a = 0; a <= nu; ++a) {
    const double u = -0.5 * m.width_x + m.width_x * a / nu;
    for (int b = 0; b <= nv; ++b) {
      const double v = -0.5 * m.width_y + m.width_y * b / nv;
      f(u, v);
    }
  }
}

}  // namespace

void ObjectModel::validate() const {
  if (!(width_x > 0.0 && width_y > 0.0 && base_height > 0.0)) throw RangeError("object dimensions must be positive");
  if (width_x > 35.0 || width_y > 30.0) throw RangeError("object footprint exceeds 35 x 30 mm");
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  survey(*this, [&](double u, double v) {
    const double h = *object_height_at(*this, u, v);
    lo = std::min(lo, h);
    hi = std::max(hi, h);
  });
  if (hi > 7.0) throw RangeError("object taller than 7 mm");
  if (lo <= 0.0) throw RangeError("object surface reaches the belt");
}

double ObjectModel::max_height() const {
  double hi = 0.0;
  survey(*this, [&](double u, double v) { hi = std::max(hi, *object_height_at(*this, u, v)); });
  return hi;
}

ObjectModel ObjectModel::plate(double width_x, double width_y, double height) {
  return ObjectModel{width_x, width_y, height, {}};
}

ObjectModel ObjectModel::front_part() {
  ObjectModel m;
  m.features.push_back(Bevel{Bevel::Edge::pos_u, 4.0, 2.0});
  m.features.push_back(Notch{-9.0, -3.0, -12.5, -6.0, 2.0});
  m.features.push_back(Stud{-10.0, 7.5, 2.5, 1.5});
  return m;
}

ObjectModel ObjectModel::back_part() {
  ObjectModel m;
  m.features.push_back(Bevel{Bevel::Edge::neg_v, 3.0, 1.5});
  m.features.push_back(Notch{4.0, 10.0, -3.0, 3.0, 2.0});
  m.features.push_back(Stud{10.5, 8.0, 2.0, 1.5});
  return m;
}

std::optional<double> object_height_at(const ObjectModel& m, double u, double v) {
  const double hu = 0.5 * m.width_x, hv = 0.5 * m.width_y;
  if (std::abs(u) > hu || std::abs(v) > hv) return std::nullopt;
  double h = m.base_height;
  for (const auto& f : m.features) {
    std::visit(overloaded{
                   [&](const Bevel& b) {
                     double d = 0.0;
                     switch (b.edge) {
                       case Bevel::Edge::neg_u: d = u + hu; break;
                       case Bevel::Edge::pos_u: d = hu - u; break;
                       case Bevel::Edge::neg_v: d = v + hv; break;
                       case Bevel::Edge::pos_v: d = hv - v; break;
                     }
                     if (d < b.width) h -= b.drop * (1.0 - d / b.width);
                   },
                   [&](const Notch& n) {
                     if (u >= n.u0 && u <= n.u1 && v >= n.v0 && v <= n.v1) h -= n.depth;
                   },
                   [&](const Stud& s) {
                     const double du = u - s.u, dv = v - s.v;
                     if (du * du + dv * dv <= s.radius * s.radius) h += s.height;
                   },
               },
               f);
  }
  return h;
}

PlacedObject::PlacedObject(const ObjectModel& model, const Pose& pose)
    : model_(model), pose_(pose), cos_tilt_(std::cos(pose.tilt_angle)), tan_tilt_(std::tan(pose.tilt_angle)) {
  const double n = std::hypot(pose_.tilt_axis_x, pose_.tilt_axis_y);
  if (!(n > 0.0)) throw RangeError("tilt axis must be non-zero");
  pose_.tilt_axis_x /= n;
  pose_.tilt_axis_y /= n;
  if (pose_.tilt_angle < 0.0 || pose_.tilt_angle > kPi / 6.0 + 1e-12) throw RangeError("tilt outside [0, 30 deg]");
}

std::pair<double, double> PlacedObject::to_object(double x, double y) const {
  const double tx = pose_.tilt_axis_x, ty = pose_.tilt_axis_y;
  const double ax = -ty, ay = tx;
  const double rx = x - pose_.tx, ry = y - pose_.ty;
  const double s = rx * ax + ry * ay;
  const double r = rx * tx + ry * ty;
  const double s_unf = s / cos_tilt_;
  const double ux = tx * r + ax * s_unf, uy = ty * r + ay * s_unf;
  const double c = std::cos(pose_.theta), sn = std::sin(pose_.theta);
  return {c * ux + sn * uy, -sn * ux + c * uy};
}

std::optional<double> PlacedObject::height_at(double x, double y) const {
  const auto [u, v] = to_object(x, y);
  const auto h = object_height_at(model_, u, v);
  if (!h) return std::nullopt;
  const double s = (x - pose_.tx) * (-pose_.tilt_axis_y) + (y - pose_.ty) * pose_.tilt_axis_x;
  return pose_.base_z + s * tan_tilt_ + *h * cos_tilt_;
}

bool PlacedObject::covers(double x, double y, double margin) const {
  const auto [u, v] = to_object(x, y);
  return std::abs(u) <= 0.5 * model_.width_x + margin && std::abs(v) <= 0.5 * model_.width_y + margin;
}

double PlacedObject::max_height() const {
  const double c = std::cos(pose_.theta), sn = std::sin(pose_.theta);
  const double ax = -pose_.tilt_axis_y, ay = pose_.tilt_axis_x;
  double hi = -std::numeric_limits<double>::infinity();
  survey(model_, [&](double u, double v) {
    const double wx = c * u - sn * v, wy = sn * u + c * v;
    const double s = (wx * ax + wy * ay) * cos_tilt_;
    hi = std::max(hi, pose_.base_z + s * tan_tilt_ + *object_height_at(model_, u, v) * cos_tilt_);
  });
  return hi;
}

std::array<double, 4> PlacedObject::bounds() const {
  const double c = std::cos(pose_.theta), sn = std::sin(pose_.theta);
  const double tx = pose_.tilt_axis_x, ty = pose_.tilt_axis_y;
  const double ax = -ty, ay = tx;
  std::array<double, 4> b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                          std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (double su : {-0.5, 0.5})
    for (double sv : {-0.5, 0.5}) {
      const double u = su * model_.width_x, v = sv * model_.width_y;
      const double wx = c * u - sn * v, wy = sn * u + c * v;
      const double s = (wx * ax + wy * ay) * cos_tilt_;
      const double r = wx * tx + wy * ty;
      const double px = pose_.tx + tx * r + ax * s, py = pose_.ty + ty * r + ay * s;
      b[0] = std::min(b[0], px);
      b[1] = std::max(b[1], px);
      b[2] = std::min(b[2], py);
      b[3] = std::max(b[3], py);
    }
  return b;
}

void ScannerConfig::validate() const {
  if (!(line_pitch_x > 0.0 && sample_pitch_y > 0.0)) throw RangeError("scanner pitches must be positive");
  if (!(outlier_rate >= 0.0)) throw RangeError("outlier_rate must be >= 0");
  if (!(height_divergence >= 0.0)) throw RangeError("height_divergence must be >= 0");
  if (half_rays < 1) throw RangeError("half_rays must be >= 1");
  if (!(shadow_margin >= 0.0)) throw RangeError("shadow_margin must be >= 0");
}

void DesignSpace::validate() const {
  if (!(x_max >= x_min && y_max >= y_min)) throw RangeError("design space bounds are inverted");
  if (!(offset_max >= offset_min && offset_min >= 0.0)) throw RangeError("design space offsets are invalid");
  if (!(max_occlusion > 0.0 && max_occlusion <= 1.0)) throw RangeError("max_occlusion must be in (0, 1]");
}

namespace {

struct Hit {
  double y, z;
};

// Intersects ray j of line x with one object. y depends on the surface
// height, so the intersection is a short fixed-point iteration started from
// the object's top.
std::optional<Hit> ray_hit(const PlacedObject& obj, double top_z, double x, int j, const ScannerConfig& cfg) {
  const double off = j * cfg.sample_pitch_y;
  auto y_at = [&](double z) { return cfg.belt_center_y + off * (1.0 + cfg.height_divergence * z); };
  std::optional<double> h;
  for (double z0 : {top_z, 0.0}) {
    h = obj.height_at(x, y_at(z0));
    if (h) break;
  }
  if (!h) return std::nullopt;
  for (int it = 0; it < 8; ++it) {
    const auto next = obj.height_at(x, y_at(*h));
    if (!next) return std::nullopt;
    if (*next == *h) break;
    h = next;
  }
  return Hit{y_at(*h), *h};
}

void add_clutter(PointCloud& cloud, const ScannerConfig& cfg) {
  const double y_lo = cfg.belt_center_y - cfg.half_rays * cfg.sample_pitch_y;
  const int rays = 2 * cfg.half_rays + 1;
  auto band = [&](double x_lo, double x_hi, double pitch, auto z_of) {
    const int lines = static_cast<int>(std::floor((x_hi - x_lo) / pitch)) + 1;
    for (int k = 0; k < lines; ++k) {
      const double x = x_lo + k * pitch;
      for (int j = 0; j < rays; j += 2) cloud.push_back({x, y_lo + j * cfg.sample_pitch_y, z_of(x)}, ObjectLabel::background);
    }
  };
  if (cfg.clutter.wall) band(-8.0, -1.0, 0.5, [](double x) { return 16.0 + 0.5 * x; });
  if (cfg.clutter.rails) {
    band(-0.9, -0.1, 0.4, [](double) { return 3.0; });
    band(cfg.window_x + 0.1, cfg.window_x + 0.9, 0.4, [](double) { return 3.0; });
  }
  if (cfg.clutter.floor) band(-10.0, cfg.window_x + 10.0, 2.0, [](double x) { return -2.0 + 0.002 * x; });
}

}  // namespace

PointCloud simulate_scan(const SceneGeometry& geometry, const ScannerConfig& cfg, Rng& rng) {
  cfg.validate();
  PointCloud cloud(std::vector<Point3>{}, std::vector<ObjectLabel>{});

  const auto& objs = geometry.objects;
  if (!objs.empty()) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    std::vector<double> tops;
    for (const auto& [o, label] : objs) {
      const auto b = o.bounds();
      xmin = std::min(xmin, b[0]);
      xmax = std::max(xmax, b[1]);
      tops.push_back(o.max_height());
    }
    const PlacedObject* top = nullptr;
    for (const auto& [o, label] : objs)
      if (label == ObjectLabel::top) top = &o;

    const auto k0 = static_cast<long>(std::floor(xmin / cfg.line_pitch_x)) - 1;
    const auto k1 = static_cast<long>(std::ceil(xmax / cfg.line_pitch_x)) + 1;
    for (long k = k0; k <= k1; ++k) {
      const double x = k * cfg.line_pitch_x;
      for (int j = -cfg.half_rays; j <= cfg.half_rays; ++j) {
        std::optional<Hit> best;
        ObjectLabel best_label = ObjectLabel::background;
        for (std::size_t o = 0; o < objs.size(); ++o) {
          const auto hit = ray_hit(objs[o].first, tops[o], x, j, cfg);
          if (hit && (!best || hit->z > best->z)) {
            best = hit;
            best_label = objs[o].second;
          }
        }
        if (!best) continue;
        if (best_label != ObjectLabel::top && top && cfg.shadow_margin > 0.0 &&
            top->covers(x, best->y, cfg.shadow_margin))
          continue;
        cloud.push_back({x, best->y, best->z}, best_label);
      }
    }
  }

  if (cfg.outlier_rate > 0.0) {
    std::poisson_distribution<int> count(cfg.outlier_rate);
    const int n = count(rng);
    const double half_y = cfg.half_rays * cfg.sample_pitch_y;
    for (int i = 0; i < n; ++i) {
      const double x = uniform(rng, 0.0, cfg.window_x);
      const double y = uniform(rng, cfg.belt_center_y - half_y, cfg.belt_center_y + half_y);
      const double z = uniform(rng, 0.0, 15.0);
      cloud.push_back({x, y, z}, ObjectLabel::background);
    }
  }
  add_clutter(cloud, cfg);
  return cloud;
}

std::optional<Pose> settle_top(const PlacedObject& lower, const ObjectModel& top, double tx, double ty, double theta,
                               const DesignSpace& space) {
  const auto& lp = lower.pose();
  double ax = lp.tx - tx, ay = lp.ty - ty;
  const double len = std::hypot(ax, ay);
  if (len < 1e-9) {
    ax = 1.0;
    ay = 0.0;
  } else {
    ax /= len;
    ay /= len;
  }
  const double c = std::cos(theta), sn = std::sin(theta);
  const double hx = 0.5 * top.width_x, hy = 0.5 * top.width_y;
  double s_far = std::numeric_limits<double>::infinity();
  for (double su : {-1.0, 1.0})
    for (double sv : {-1.0, 1.0}) {
      const double wx = c * su * hx - sn * sv * hy, wy = sn * su * hx + c * sv * hy;
      s_far = std::min(s_far, wx * ax + wy * ay);
    }

  const double lc = std::cos(lp.theta), ls = std::sin(lp.theta);
  bool any = false;
  double min_s = std::numeric_limits<double>::infinity(), max_h = 0.0;
  double best_ratio = -1.0, best_s = 0.0;
  survey(lower.model(), [&](double u, double v) {
    const double px = lp.tx + lc * u - ls * v, py = lp.ty + ls * u + lc * v;
    const double rx = px - tx, ry = py - ty;
    const double qu = c * rx + sn * ry, qv = -sn * rx + c * ry;
    if (std::abs(qu) > hx || std::abs(qv) > hy) return;
    const double h = lp.base_z + *object_height_at(lower.model(), u, v);
    const double s = rx * ax + ry * ay - s_far;
    any = true;
    min_s = std::min(min_s, s);
    max_h = std::max(max_h, h);
    if (s > 1e-9 && h / s > best_ratio) {
      best_ratio = h / s;
      best_s = s;
    }
  });
  if (!any) return std::nullopt;

  Pose pose;
  pose.tx = tx;
  pose.ty = ty;
  pose.theta = theta;
  pose.tilt_axis_x = ay;  // tilt axis perpendicular to the ascent direction
  pose.tilt_axis_y = -ax;
  const double s_com = -s_far;
  if (min_s <= 1e-9 || best_s <= s_com) {
    // Center of mass over the lower object: rests flat on it.
    pose.tilt_angle = 0.0;
    pose.base_z = max_h + space.clearance;
  } else {
    pose.tilt_angle = std::atan(best_ratio);
    if (pose.tilt_angle > space.max_tilt) return std::nullopt;
    pose.base_z = s_com * best_ratio + space.clearance;
  }
  if (PlacedObject(top, pose).max_height() >= space.max_scene_height) return std::nullopt;
  return pose;
}

ScenePair make_pair(const ObjectModel& lower_model, const Pose& lower_pose, const ObjectModel& top_model,
                    const Pose& top_pose, const ScannerConfig& cfg, Rng& rng) {
  ScenePair pair;
  pair.lower_model = lower_model;
  pair.top_model = top_model;
  pair.lower_pose = lower_pose;
  pair.top_pose = top_pose;
  PlacedObject lower(pair.lower_model, lower_pose);
  PlacedObject top(pair.top_model, top_pose);
  SceneGeometry both{{{lower, ObjectLabel::lower}, {top, ObjectLabel::top}}};
  SceneGeometry alone{{{lower, ObjectLabel::lower}}};
  pair.occluded_scan = simulate_scan(both, cfg, rng);
  pair.ground_truth_lower = simulate_scan(alone, cfg, rng);
  const auto gt = pair.ground_truth_lower.count_label(ObjectLabel::lower);
  const auto seen = pair.occluded_scan.count_label(ObjectLabel::lower);
  pair.occlusion_fraction = gt == 0 ? 0.0 : 1.0 - static_cast<double>(seen) / static_cast<double>(gt);
  return pair;
}

ScenePair sample_scene(Rng& rng, const std::pair<ObjectModel, ObjectModel>& models, const DesignSpace& space,
                       const ScannerConfig& cfg) {
  space.validate();
  for (int attempt = 0; attempt < 100; ++attempt) {
    const bool swap = uniform(rng, 0.0, 1.0) < 0.5;
    const ObjectModel& lower_model = swap ? models.second : models.first;
    const ObjectModel& top_model = swap ? models.first : models.second;

    Pose lp;
    lp.tx = uniform(rng, space.x_min, space.x_max);
    lp.ty = uniform(rng, space.y_min, space.y_max);
    lp.theta = uniform(rng, 0.0, 2.0 * kPi);
    const double r = uniform(rng, space.offset_min, space.offset_max);
    const double phi = uniform(rng, 0.0, 2.0 * kPi);
    const double theta = uniform(rng, 0.0, 2.0 * kPi);
    PlacedObject lower(lower_model, lp);
    const auto tp = settle_top(lower, top_model, lp.tx + r * std::cos(phi), lp.ty + r * std::sin(phi), theta, space);
    if (!tp) continue;
    auto pair = make_pair(lower_model, lp, top_model, *tp, cfg, rng);
    if (pair.occlusion_fraction > 0.0 && pair.occlusion_fraction <= space.max_occlusion) return pair;
  }
  throw SamplingError("no valid two-contact pose after 100 resamples");
}

DatasetSplit DatasetSplit::for_count(std::size_t n) {
  DatasetSplit s;
  s.n = n;
  s.train = n * 4 / 5;
  s.test = n - s.train;
  s.validation = s.train / 5;
  s.train_actual = s.train - s.validation;
  return s;
}

std::string sample_stem(std::size_t index) {
  std::ostringstream ss;
  ss << std::setw(6) << std::setfill('0') << index;
  return ss.str();
}

std::string format_manifest(const DatasetOptions& o) {
  const auto split = DatasetSplit::for_count(o.n);
  std::ostringstream ss;
  ss << std::setprecision(17);
  ss << "format=ocpi-dataset-1\n";
  ss << "seed=" << o.seed << "\n";
  ss << "n=" << o.n << "\n";
  ss << "split.train=" << split.train << "\n";
  ss << "split.test=" << split.test << "\n";
  ss << "split.validation=" << split.validation << "\n";
  ss << "split.train_actual=" << split.train_actual << "\n";
  ss << "split.order=train[0," << split.train_actual << ") validation[" << split.train_actual << ","
     << split.train << ") test[" << split.train << "," << split.n << ")\n";
  const auto& c = o.scanner;
  ss << "scanner.line_pitch_x=" << c.line_pitch_x << "\n";
  ss << "scanner.sample_pitch_y=" << c.sample_pitch_y << "\n";
  ss << "scanner.height_divergence=" << c.height_divergence << "\n";
  ss << "scanner.outlier_rate=" << c.outlier_rate << "\n";
  ss << "scanner.belt_center_y=" << c.belt_center_y << "\n";
  ss << "scanner.half_rays=" << c.half_rays << "\n";
  ss << "scanner.shadow_margin=" << c.shadow_margin << "\n";
  ss << "scanner.clutter=" << (c.clutter.wall ? "wall," : "") << (c.clutter.floor ? "floor," : "")
     << (c.clutter.rails ? "rails" : "") << "\n";
  const auto& d = o.space;
  ss << "design.x=" << d.x_min << ":" << d.x_max << "\n";
  ss << "design.y=" << d.y_min << ":" << d.y_max << "\n";
  ss << "design.offset=" << d.offset_min << ":" << d.offset_max << "\n";
  ss << "design.max_occlusion=" << d.max_occlusion << "\n";
  return ss.str();
}

ScenePair generate_sample(const DatasetOptions& opts, std::size_t index) {
  auto rng = make_rng(opts.seed, "scene", index);
  static const std::pair<ObjectModel, ObjectModel> models{ObjectModel::front_part(), ObjectModel::back_part()};
  return sample_scene(rng, models, opts.space, opts.scanner);
}

DatasetSplit generate_dataset(const DatasetOptions& opts, const std::filesystem::path& out_dir) {
  if (opts.n < 1) throw RangeError("dataset needs n >= 1");
  opts.scanner.validate();
  opts.space.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  if (!opts.dry_run) {
    parallel_for(opts.n, [&](std::size_t i) {
      const auto pair = generate_sample(opts, i);
      const auto stem = sample_stem(i);
      io::write_cloud(out_dir / (stem + "_occluded.ocpc"), pair.occluded_scan);
      io::write_cloud(out_dir / (stem + "_gt.ocpc"), pair.ground_truth_lower);
    });
  }
  io::write_text_atomic(out_dir / "manifest.txt", format_manifest(opts));
  return DatasetSplit::for_count(opts.n);
}

}  // namespace ocpi::scene
