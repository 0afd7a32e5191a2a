#include <benchmark/benchmark.h>

#include <vector>

#include "oskf/keypoints.hpp"
#include "oskf/metrics.hpp"
#include "oskf/pyramid.hpp"
#include "oskf/refiner.hpp"
#include "oskf/train.hpp"

namespace {

using namespace oskf;

const SynthScene& scene() {
  static const SynthScene s = [] {
    return make_scene(synthetic_model(256), SynthConfig{}, 1);
  }();
  return s;
}

void BM_FarthestPointSample(benchmark::State& state) {
  const ObjectModel model = synthetic_model(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(farthest_point_sample(model, 64));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FarthestPointSample)->RangeMultiplier(4)->Range(256, 16384)->Complexity();

void BM_ExtractOskf(benchmark::State& state) {
  const SynthScene& s = scene();
  const KeypointSet kp = farthest_point_sample(s.model, static_cast<std::size_t>(state.range(0)));
  const Pose& p = s.gt_pose;
  std::vector<Vec2> px = project_keypoints(kp.keypoints, p, s.k);
  for (auto& q : px) q = image_to_crop(q, s.crop, s.pyramid.crop_size);
  for (auto _ : state) benchmark::DoNotOptimize(extract_oskf(s.pyramid, px));
}
BENCHMARK(BM_ExtractOskf)->Arg(16)->Arg(64);

void BM_Cascade(benchmark::State& state) {
  const SynthScene& s = scene();
  const RefinerConfig cfg = DemoConfig::toy_refiner();
  const RefinerParams params = init_refiner_params(cfg, 1);
  const KeypointSet kp = farthest_point_sample(s.model, static_cast<std::size_t>(cfg.keypoints));
  for (auto _ : state) benchmark::DoNotOptimize(cascade(s.pyramid, kp, s.crop, s.k, params, cfg));
}
BENCHMARK(BM_Cascade)->Unit(benchmark::kMillisecond);

void BM_SceneLossGradient(benchmark::State& state) {
  const SynthScene& s = scene();
  const RefinerConfig cfg = DemoConfig::toy_refiner();
  const RefinerParams params = init_refiner_params(cfg, 1);
  const KeypointSet kp = farthest_point_sample(s.model, static_cast<std::size_t>(cfg.keypoints));
  LossConfig loss;
  loss.n_refiners = cfg.steps;
  for (auto _ : state) benchmark::DoNotOptimize(scene_loss(params, s, kp, cfg, loss, true));
}
BENCHMARK(BM_SceneLossGradient)->Unit(benchmark::kMillisecond);

void BM_AddS(benchmark::State& state) {
  const ObjectModel model = synthetic_model(static_cast<std::size_t>(state.range(0)));
  Pose pred = scene().gt_pose;
  pred.translation.x() += 0.01;
  for (auto _ : state) benchmark::DoNotOptimize(adds_distance(pred, scene().gt_pose, model.points));
}
BENCHMARK(BM_AddS)->Arg(1000)->Arg(20000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
