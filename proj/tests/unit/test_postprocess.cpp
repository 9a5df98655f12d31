#include <cmath>

#include "doctest.h"
#include "ocpi/errors.hpp"
#include "ocpi/metrics.hpp"
#include "ocpi/pipeline.hpp"
#include "ocpi/postprocess.hpp"
#include "ocpi/scene.hpp"
#include "support/oracles.hpp"

using namespace ocpi;

TEST_CASE("otsu separates a bimodal raster") {
  std::vector<double> r(100);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = i % 2 ? 0.8 : 0.1;
  const auto o = post::otsu_threshold(r);
  CHECK_FALSE(o.degenerate);
  CHECK(o.threshold > 0.1);
  CHECK(o.threshold < 0.8);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(o.foreground[i] == (i % 2 ? 1 : 0));
  // Lowest threshold wins among equal scores: every k in (bin(0.1), bin(0.8)] ties.
  CHECK(o.bin == post::otsu_bin_of(0.1) + 1);
}

TEST_CASE("otsu flags constant rasters") {
  const std::vector<double> flat(50, 0.4);
  const auto o = post::otsu_threshold(flat);
  CHECK(o.degenerate);
  for (auto f : o.foreground) CHECK(f == 0);
  CHECK_THROWS_AS(post::otsu_threshold(std::vector<double>{0.5, 1.5}), RangeError);
}

TEST_CASE("otsu equals the exhaustive maximizer") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> r(64 + rng() % 200);
    const int modes = 1 + static_cast<int>(rng() % 4);
    for (auto& v : r) {
      const double center = static_cast<double>(rng() % static_cast<unsigned>(modes)) / modes;
      v = std::clamp(center + uniform(rng, -0.1, 0.1), 0.0, 1.0);
    }
    const auto o = post::otsu_threshold(r);
    const int want = oracle::otsu_exhaustive(r);
    CHECK(o.bin == (want == 0 ? 0 : want));
    CHECK(o.degenerate == (want == 0));
  }
}

TEST_CASE("backprojection rules") {
  GridSpec g{3, 2, 1.0, 1.0, 10.0, 20.0};
  PointCloud src(std::vector<Point3>{{10.1, 20.2, 4.0}, {12.0, 21.0, 5.0}});
  GridMapping m(g);
  m.cell_to_point[g.index(0, 0)] = 0;
  m.cell_to_point[g.index(2, 1)] = 1;
  DepthImage inp(g);
  inp.set(g.index(0, 0), 7.0);
  inp.set(g.index(1, 1), 8.0);
  inp.set(g.index(2, 1), 9.0);
  std::vector<std::uint8_t> mask(g.cells(), 0);
  mask[g.index(0, 0)] = mask[g.index(1, 1)] = mask[g.index(2, 1)] = 1;
  const auto out = post::backproject(inp, m, src, mask);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == Point3{10.1, 20.2, 7.0});
  CHECK(out[1] == Point3{11.0, 21.0, 8.0});  // unmatched cell: its center
  CHECK(out[2] == Point3{12.0, 21.0, 9.0});
  CHECK_THROWS_AS(post::backproject(inp, m, src, std::vector<std::uint8_t>(2)), ShapeError);
}

TEST_CASE("scene recombination") {
  PointCloud top(std::vector<Point3>{{1, 1, 1}});
  PointCloud lower(std::vector<Point3>{{2, 2, 2}, {3, 3, 3}});
  const auto r = post::recombine_scene(top, lower);
  CHECK(r.size() == 3);
  CHECK(r.label(0) == ObjectLabel::top);
  CHECK(r.count_label(ObjectLabel::lower) == 2);
  const auto only = post::recombine_scene(PointCloud{}, lower);
  CHECK(only.size() == 2);
  CHECK(only[1] == lower[1]);
}

TEST_CASE("metrics closed forms") {
  const std::vector<double> a(64, 0.3), b(64, 0.4);
  const auto same = eval::metrics(a, a, 8, 8);
  CHECK(same.mse == 0.0);
  CHECK(same.mae == 0.0);
  CHECK(same.psnr == 99.0);
  CHECK(same.ssim == 1.0);
  const auto d = eval::metrics(a, b, 8, 8);
  CHECK(d.mse == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(d.mae == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(d.psnr == doctest::Approx(20.0).epsilon(1e-9));
  CHECK_THROWS_AS(eval::ssim(a, b, 4, 16), ShapeError);
}

TEST_CASE("ssim symmetry and psnr monotonicity") {
  Rng rng(2);
  std::vector<double> x(32 * 16), y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = uniform(rng, 0, 1);
    y[i] = uniform(rng, 0, 1);
  }
  CHECK(std::abs(eval::ssim(x, y, 32, 16) - eval::ssim(y, x, 32, 16)) <= 1e-12);
  CHECK(eval::ssim(x, x, 32, 16) == 1.0);
  const double s = eval::ssim(x, y, 32, 16);
  CHECK(s >= -1.0);
  CHECK(s <= 1.0);

  std::vector<double> noise(x.size());
  for (auto& n : noise) n = uniform(rng, -1, 1);
  double prev = 1e9;
  for (double amp : {0.01, 0.02, 0.05, 0.1}) {
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] + amp * noise[i];
    const double p = eval::psnr(eval::mse(z, x));
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("aggregate reports mean and unbiased variance") {
  std::vector<eval::MetricReport> r{{0.1, 0.2, 30, 0.9}, {0.3, 0.4, 20, 0.7}};
  const auto s = eval::aggregate(r);
  CHECK(s.mse.mean == doctest::Approx(0.2));
  CHECK(s.psnr.variance == doctest::Approx(50.0));
  CHECK(eval::aggregate(std::vector<eval::MetricReport>{r[0]}).psnr.variance == 0.0);
}

TEST_CASE("identity pipeline reproduces a single object") {
  scene::ScannerConfig cfg;
  const auto model = scene::ObjectModel::front_part();
  scene::Pose pose;
  pose.tx = 46;
  pose.ty = 35;
  pose.theta = 0.4;
  const scene::PlacedObject obj(model, pose);
  Rng rng(3);
  const auto scan = scene::simulate_scan(scene::SceneGeometry{{{obj, ObjectLabel::lower}}}, cfg, rng);
  preprocess::Config pc;
  const auto r = pipeline::infer(scan, pc, 24.0, pipeline::NoTopSegmenter{}, pipeline::IdentityInpainter{});
  CHECK(r.top.empty());
  std::size_t mapped = 0, fg = 0;
  for (std::size_t c = 0; c < r.grid.mapping.cell_to_point.size(); ++c) {
    mapped += r.grid.mapping.cell_to_point[c] >= 0;
    fg += r.otsu.foreground[c] != 0;
  }
  CHECK(r.lower.size() == fg);
  CHECK(fg <= mapped);
  CHECK(fg * 10 >= mapped * 9);
  // Every emitted point is a source point with its own z.
  std::size_t k = 0;
  for (int i = 0; i < r.grid.image.spec().nx; ++i)
    for (int j = 0; j < r.grid.image.spec().ny; ++j) {
      const auto c = r.grid.image.spec().index(i, j);
      if (!r.otsu.foreground[c]) continue;
      const auto src = r.grid.mapping.cell_to_point[c];
      REQUIRE(src >= 0);
      CHECK(r.lower[k] == r.source[static_cast<std::size_t>(src)]);
      ++k;
    }
  CHECK(k == r.lower.size());
}
