#include <filesystem>

#include "doctest.h"
#include "ocpi/errors.hpp"
#include "ocpi/geometry.hpp"
#include "ocpi/io.hpp"
#include "ocpi/rng.hpp"

using namespace ocpi;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ocpi_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("cell centers are affine in the index") {
  GridSpec dyadic{256, 64, 0.25, 1.125, -3.0, 7.5};
  for (int i = 0; i < dyadic.nx; ++i)
    for (int j = 0; j < dyadic.ny; ++j) {
      const auto [x, y] = cell_center(dyadic, i, j);
      CHECK(x == -3.0 + i * 0.25);
      CHECK(y == 7.5 + j * 1.125);
    }

  // Non-dyadic pitches are only affine up to rounding of i * dx.
  GridSpec paper;
  const auto [x_last, y_last] = cell_center(paper, 255, 63);
  CHECK(x_last == doctest::Approx(76.5).epsilon(1e-12));
  CHECK(y_last == doctest::Approx(69.3).epsilon(1e-12));
  for (int i = 1; i < paper.nx; ++i) {
    const double step = cell_center(paper, i, 0).first - cell_center(paper, i - 1, 0).first;
    CHECK(std::abs(step - 0.3) < 1e-12);
  }
}

TEST_CASE("cell_center rejects out-of-range indices") {
  GridSpec g;
  CHECK_THROWS_AS(cell_center(g, -1, 0), IndexError);
  CHECK_THROWS_AS(cell_center(g, 256, 0), IndexError);
  CHECK_THROWS_AS(cell_center(g, 0, 64), IndexError);
}

TEST_CASE("grid is centered on the cloud bounding box") {
  PointCloud c(std::vector<Point3>{{10, 20, 1}, {40, 45, 2}, {25, 30, 3}});
  const auto g = grid_centered_on(c, 256, 64, 0.3, 1.1);
  const auto [x0, y0] = cell_center(g, 0, 0);
  const auto [x1, y1] = cell_center(g, 255, 63);
  CHECK((x0 + x1) / 2 == doctest::Approx(25.0));
  CHECK((y0 + y1) / 2 == doctest::Approx(32.5));
}

TEST_CASE("depth image keeps the background sentinel") {
  GridSpec g{4, 4, 1.0, 1.0, 0.0, 0.0};
  DepthImage img(g);
  CHECK(img.valid_count() == 0);
  img.set(5, 3.5);
  CHECK(img.valid(1, 1));
  CHECK(img.z(1, 1) == 3.5);
  img.clear(5);
  CHECK_FALSE(img.valid(1, 1));
  CHECK(img.z(1, 1) == 0.0);
  CHECK_THROWS_AS(img.set(0, std::nan("")), RangeError);
  // Invalid cells are forced to z = 0 on construction.
  DepthImage forced(g, std::vector<double>(16, 2.0), std::vector<std::uint8_t>(16, 0));
  for (double z : forced.z()) CHECK(z == 0.0);
}

TEST_CASE("normalization round trip and range checks") {
  GridSpec g{4, 2, 1.0, 1.0, 0.0, 0.0};
  DepthImage img(g);
  img.set(0, 0.0);
  img.set(3, 12.0);
  img.set(7, 24.0);
  const auto r = normalize_depth(img, 24.0);
  CHECK(r[0] == 0.0);
  CHECK(r[3] == 0.5);
  CHECK(r[7] == 1.0);
  CHECK(r[1] == 0.0);
  const auto back = denormalize_depth(r, 24.0, g, img.valid());
  CHECK(back == img);
  img.set(2, 25.0);
  CHECK_THROWS_AS(normalize_depth(img, 24.0), RangeError);
  std::vector<double> bad(8, 0.0);
  bad[1] = 1.5;
  CHECK_THROWS_AS(denormalize_depth(bad, 24.0, g, img.valid()), RangeError);
}

TEST_CASE("point clouds validate labels and coordinates") {
  CHECK_THROWS_AS(PointCloud(std::vector<Point3>{{0, 0, std::nan("")}}), RangeError);
  CHECK_THROWS_AS(PointCloud(std::vector<Point3>{{0, 0, 0}}, std::vector<ObjectLabel>{}), ShapeError);
  PointCloud c(std::vector<Point3>{{0, 0, 0}, {1, 1, 1}}, {ObjectLabel::lower, ObjectLabel::top});
  CHECK(c.count_label(ObjectLabel::top) == 1);
  std::vector<std::size_t> idx{1};
  const auto s = c.select(idx);
  CHECK(s.size() == 1);
  CHECK(s.label(0) == ObjectLabel::top);
}

TEST_CASE("cloud and depth files round trip") {
  Rng rng(3);
  std::vector<Point3> pts;
  std::vector<ObjectLabel> labels;
  for (int i = 0; i < 100; ++i) {
    pts.push_back({uniform(rng, 0, 90), uniform(rng, 0, 70), uniform(rng, 0, 15)});
    labels.push_back(static_cast<ObjectLabel>(i % 3));
  }
  // The file stores f32 coordinates.
  for (auto& p : pts) p = {static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z)};
  PointCloud c(pts, labels);
  const auto path = scratch("cloud.ocpc");
  io::write_cloud(path, c);
  CHECK(io::read_cloud(path) == c);

  GridSpec g{8, 4, 0.5, 1.5, 2.0, 3.0};
  DepthImage img(g);
  img.set(3, 4.25);
  img.set(30, 1.5);
  const auto dpath = scratch("img.ocdr");
  io::write_depth(dpath, img);
  CHECK(io::read_depth(dpath) == img);

  CHECK_THROWS_AS(io::read_cloud(scratch("missing.ocpc")), IoError);
  io::write_text_atomic(scratch("junk.ocpc"), "not a cloud");
  CHECK_THROWS_AS(io::read_cloud(scratch("junk.ocpc")), IoError);
}

TEST_CASE("substreams are independent and reproducible") {
  CHECK(substream_seed(1, "scene", 0) == substream_seed(1, "scene", 0));
  CHECK(substream_seed(1, "scene", 0) != substream_seed(1, "scene", 1));
  CHECK(substream_seed(1, "scene", 0) != substream_seed(1, "init", 0));
  CHECK(substream_seed(1, "scene", 0) != substream_seed(2, "scene", 0));
}
