#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "longreg/detector.hpp"
#include "longreg/metrics.hpp"
#include "longreg/phantom.hpp"
#include "longreg/refine.hpp"
#include "longreg/synth.hpp"

using namespace longreg;

namespace {

const Volume& phantom_image(std::int64_t size) {
  static std::map<std::int64_t, Volume> cache;
  auto it = cache.find(size);
  if (it == cache.end()) it = cache.emplace(size, make_smooth_phantom(size, 128.0 / static_cast<double>(size))).first;
  return it->second;
}

RigidTransform small_rigid() {
  return {RigidTransform::from_axis_angle(Vec3(1, 2, 3), 0.1).rotation(), Vec3(1.5, -2, 0.5)};
}

void BM_Resample(benchmark::State& state) {
  const Volume& v = phantom_image(state.range(0));
  const RigidTransform t = small_rigid();
  for (auto _ : state) benchmark::DoNotOptimize(resample(v, t, v.geometry()));
  state.SetItemsProcessed(state.iterations() * v.size());
}
BENCHMARK(BM_Resample)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_WeightedFit(benchmark::State& state) {
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> u(-80, 80);
  WeightedPointSet a, b;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    b.points.emplace_back(u(g), u(g), u(g));
    a.points.push_back(small_rigid()(b.points.back()));
    a.weights.push_back(1.0);
    b.weights.push_back(0.5);
  }
  for (auto _ : state) benchmark::DoNotOptimize(fit_weighted_rigid(a, b));
}
BENCHMARK(BM_WeightedFit)->Arg(8)->Arg(256);

void BM_Barycenters(benchmark::State& state) {
  const FeatureMaps fm = label_centroid_detector(make_brain_phantom(64, 2.0), 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(barycenters(fm));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(fm.values().size()));
}
BENCHMARK(BM_Barycenters)->Unit(benchmark::kMillisecond);

void BM_MseMetric(benchmark::State& state) {
  const Volume& a = phantom_image(64);
  const Volume b = resample(a, small_rigid(), a.geometry());
  for (auto _ : state) benchmark::DoNotOptimize(mse_metric(a, b));
}
BENCHMARK(BM_MseMetric)->Unit(benchmark::kMicrosecond);

void BM_MiMetric(benchmark::State& state) {
  const Volume& a = phantom_image(64);
  const Volume b = resample(a, small_rigid(), a.geometry());
  for (auto _ : state) benchmark::DoNotOptimize(mi_metric(a, b, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_MiMetric)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

// One refinement cost evaluation: resampling plus the metric.
void BM_RefineCost(benchmark::State& state) {
  const Volume& m = phantom_image(64);
  const Volume f = resample(m, small_rigid(), m.geometry());
  RefineConfig cfg;
  cfg.metric = state.range(0) ? MetricKind::mi(32) : MetricKind::mse();
  cfg.use_halfway_space = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(refine_cost(m, f, small_rigid(), cfg));
}
BENCHMARK(BM_RefineCost)->ArgsProduct({{0, 1}, {0, 1}})->ArgNames({"mi", "halfway"})->Unit(benchmark::kMillisecond);

void BM_IntegrateSvf(benchmark::State& state) {
  const Geometry g = Geometry::centered({64, 64, 64}, 2.0);
  Rng rng(3);
  const VelocityField v = sample_svf(g, 0.5, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(integrate_svf(v));
}
BENCHMARK(BM_IntegrateSvf)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
