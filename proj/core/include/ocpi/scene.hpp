#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ocpi/geometry.hpp"
#include "ocpi/rng.hpp"

namespace ocpi::scene {

// Surface features in the object frame (u along width_x, v along width_y,
// origin at the footprint center).
struct Bevel {
  enum class Edge { neg_u, pos_u, neg_v, pos_v };
  Edge edge = Edge::pos_u;
  double width = 4.0;  // ramp length measured from the edge
  double drop = 2.0;   // height lost at the edge
};

struct Notch {
  double u0 = 0.0, u1 = 0.0, v0 = 0.0, v1 = 0.0;
  double depth = 2.0;
};

struct Stud {
  double u = 0.0, v = 0.0;
  double radius = 2.0;
  double height = 1.5;
};

using Feature = std::variant<Bevel, Notch, Stud>;

/// Parametric heightfield standing in for an object's CAD model.
struct ObjectModel {
  double width_x = 30.0;
  double width_y = 25.0;
  double base_height = 5.0;
  std::vector<Feature> features;

  void validate() const;
  double max_height() const;

  static ObjectModel plate(double width_x = 30.0, double width_y = 25.0, double height = 5.0);
  static ObjectModel front_part();
  static ObjectModel back_part();
};

// Surface height at object-frame (u, v); nullopt outside the footprint
// (closed rectangle).
std::optional<double> object_height_at(const ObjectModel& model, double u, double v);

struct Pose {
  double tx = 0.0, ty = 0.0;            // plan-view center, mm
  double theta = 0.0;                   // in-plane rotation, rad
  double tilt_axis_x = 1.0, tilt_axis_y = 0.0;
  double tilt_angle = 0.0;              // rad, in [0, 30 deg]
  double base_z = 0.0;                  // base-plane height under (tx, ty)
};

/// An object model placed in the scene.
class PlacedObject {
 public:
  PlacedObject(const ObjectModel& model, const Pose& pose);

  std::optional<double> height_at(double x, double y) const;
  // Plan-view silhouette test (closed, optionally widened by `margin`).
  bool covers(double x, double y, double margin = 0.0) const;
  // Highest point of the posed surface.
  double max_height() const;
  // (x, y) bounding box of the silhouette: xmin, xmax, ymin, ymax.
  std::array<double, 4> bounds() const;

  const ObjectModel& model() const noexcept { return model_; }
  const Pose& pose() const noexcept { return pose_; }

 private:
  std::pair<double, double> to_object(double x, double y) const;
  ObjectModel model_;
  Pose pose_;
  double cos_tilt_, tan_tilt_;
};

struct ClutterConfig {
  bool wall = true;   // dense band at x < 0
  bool floor = true;  // band at z ~ -2
  bool rails = true;  // strips just outside the 92 mm window
};

struct ScannerConfig {
  double line_pitch_x = 0.1;
  double sample_pitch_y = 1.1;
  double height_divergence = 0.01;  // y pitch scales by (1 + height_divergence * z)
  double outlier_rate = 30.0;       // Poisson mean of sparse outliers per scan
  double belt_center_y = 35.0;
  int half_rays = 40;               // rays j in [-half_rays, half_rays]
  double window_x = 92.0;           // crop window the clutter is placed around
  double shadow_margin = 0.0;       // widens the top silhouette for occlusion
  ClutterConfig clutter;

  void validate() const;
};

struct DesignSpace {
  double x_min = 40.0, x_max = 52.0;
  double y_min = 29.0, y_max = 41.0;
  double offset_min = 4.0, offset_max = 26.0;  // top center offset from lower center
  double max_occlusion = 0.8;
  double max_tilt = 0.5235987755982988;  // 30 deg
  double max_scene_height = 15.0;
  double clearance = 0.05;

  void validate() const;
};

struct ScenePair {
  PointCloud occluded_scan;
  PointCloud ground_truth_lower;
  Pose lower_pose;
  Pose top_pose;
  ObjectModel lower_model;
  ObjectModel top_model;
  double occlusion_fraction = 0.0;
};

// Objects present in a scan; the first is lower, the optional second is top.
struct SceneGeometry {
  std::vector<std::pair<PlacedObject, ObjectLabel>> objects;
};

PointCloud simulate_scan(const SceneGeometry& geometry, const ScannerConfig& cfg, Rng& rng);

// Rests `top` on the belt and on `lower`; returns nullopt when the two
// footprints do not overlap or no stable pose exists.
std::optional<Pose> settle_top(const PlacedObject& lower, const ObjectModel& top, double tx, double ty,
                               double theta, const DesignSpace& space);

ScenePair make_pair(const ObjectModel& lower_model, const Pose& lower_pose, const ObjectModel& top_model,
                    const Pose& top_pose, const ScannerConfig& cfg, Rng& rng);

ScenePair sample_scene(Rng& rng, const std::pair<ObjectModel, ObjectModel>& models, const DesignSpace& space,
                       const ScannerConfig& cfg);

struct DatasetSplit {
  std::size_t n = 0;
  std::size_t train = 0;       // includes validation
  std::size_t test = 0;
  std::size_t validation = 0;  // tail of the train range
  std::size_t train_actual = 0;

  static DatasetSplit for_count(std::size_t n);
  bool is_train(std::size_t i) const noexcept { return i < train_actual; }
  bool is_validation(std::size_t i) const noexcept { return i >= train_actual && i < train; }
  bool is_test(std::size_t i) const noexcept { return i >= train && i < n; }
};

struct DatasetOptions {
  std::size_t n = 1;
  std::uint64_t seed = 0;
  ScannerConfig scanner;
  DesignSpace space;
  bool dry_run = false;  // manifest only
};

std::string format_manifest(const DatasetOptions& opts);

// Writes NNNNNN_occluded.ocpc / NNNNNN_gt.ocpc pairs and manifest.txt.
DatasetSplit generate_dataset(const DatasetOptions& opts, const std::filesystem::path& out_dir);

ScenePair generate_sample(const DatasetOptions& opts, std::size_t index);

std::string sample_stem(std::size_t index);

}  // namespace ocpi::scene
