#include <benchmark/benchmark.h>

#include "ocpi/adam.hpp"
#include "ocpi/losses.hpp"
#include "ocpi/networks.hpp"
#include "ocpi/ops.hpp"
#include "ocpi/preprocess.hpp"
#include "ocpi/rng.hpp"
#include "ocpi/scene.hpp"

using namespace ocpi;

namespace {

PointCloud sample_scan() {
  auto opts = scene::DatasetOptions{};
  opts.seed = 11;
  return scene::generate_sample(opts, 0).occluded_scan;
}

nn::Tensor random_tensor(const nn::Shape& s, std::uint64_t seed) {
  Rng rng(seed);
  nn::Tensor t(s);
  for (auto& v : t.data()) v = uniform(rng, -1.0, 1.0);
  return t;
}

void BM_SimulateScan(benchmark::State& state) {
  const scene::PlacedObject lower(scene::ObjectModel::front_part(), scene::Pose{46, 35, 0.3});
  const scene::SceneGeometry geo{{{lower, ObjectLabel::lower}}};
  const scene::ScannerConfig cfg;
  for (auto _ : state) {
    Rng rng(3);
    benchmark::DoNotOptimize(scene::simulate_scan(geo, cfg, rng));
  }
}
BENCHMARK(BM_SimulateScan)->Unit(benchmark::kMillisecond);

void BM_KdTreeNearest(benchmark::State& state) {
  const auto cloud = sample_scan();
  const auto tree = preprocess::build_kdtree(cloud);
  Rng rng(5);
  for (auto _ : state) benchmark::DoNotOptimize(tree.nearest(uniform(rng, 0, 92), uniform(rng, 0, 70)));
}
BENCHMARK(BM_KdTreeNearest);

void BM_Dbscan(benchmark::State& state) {
  const auto cloud = preprocess::crop(sample_scan(), preprocess::CropWindow{});
  const preprocess::DbscanParams p;
  for (auto _ : state) benchmark::DoNotOptimize(preprocess::dbscan(cloud, p));
  state.counters["points"] = static_cast<double>(cloud.size());
}
BENCHMARK(BM_Dbscan)->Unit(benchmark::kMillisecond);

void BM_Conv2dForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const auto x = random_tensor({16, c, 64, 32}, 1);
  const auto w = random_tensor({c, c, 3, 3}, 2);
  const nn::Tensor b({1, c, 1, 1});
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_forward(x, w, b));
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_UNetStep(benchmark::State& state) {
  nn::UNet net(nn::UNetConfig::inpainting(), 1);
  nn::Adam opt;
  const auto x = random_tensor({16, 1, 64, 32}, 3);
  const auto y = random_tensor({16, 1, 64, 32}, 4);
  for (auto _ : state) {
    nn::Tape t;
    const auto b = nn::bind(t, net.params(), true);
    const auto loss = nn::sq_mean(t, net.forward(t, b, t.constant(x)), y);
    t.backward(loss);
    opt.step(net.params(), nn::gradients(t, b, net.params()));
  }
}
BENCHMARK(BM_UNetStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
