#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>

#include "oskf/error.hpp"
#include "oskf/train.hpp"

namespace oskf {
namespace {

std::vector<Matrix> tensors(const RefinerParams& p) {
  std::vector<Matrix> out;
  p.visit([&](const std::string&, const Matrix& m) { out.push_back(m); });
  return out;
}

void expect_params_equal(const RefinerParams& a, const RefinerParams& b) {
  const auto ta = tensors(a), tb = tensors(b);
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) ASSERT_EQ(ta[i], tb[i]) << "tensor " << i;
}

struct Small {
  DemoConfig cfg;
  DemoData data;
  RefinerParams params;

  explicit Small(int scenes, std::uint64_t seed = 1) {
    cfg.seed = seed;
    cfg.scenes = scenes;
    cfg.holdout = 4;
    cfg.model_points = 128;
    data = demo_data(cfg);
    params = init_refiner_params(cfg.refiner, seed);
    set_coarse_depth_prior(params, encode_pose(data.train[0].gt_pose, data.train[0].crop,
                                               data.train[0].k).site.gamma_z);
  }
};

TEST(Threads, EnvironmentOverridesFlag) {
  ::setenv("OSKF_THREADS", "3", 1);
  EXPECT_EQ(resolve_threads(7), 3);
  ::unsetenv("OSKF_THREADS");
  EXPECT_EQ(resolve_threads(2), 2);
  EXPECT_GE(resolve_threads(0), 1);
}

TEST(Threads, ParallelForVisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(ToyTrain, ZeroLearningRateLeavesParamsAndFlatTrace) {
  Small s(3);
  TrainConfig tc;
  tc.batch_size = 0;
  tc.lambda_schedule = false;
  const TrainResult r = toy_train(s.params, s.data.train, s.data.keypoints, s.cfg.refiner, 5, 0.0, tc);
  expect_params_equal(r.params, s.params);
  ASSERT_EQ(r.trace.size(), 5u);
  for (double v : r.trace) EXPECT_EQ(v, r.trace.front());
}

TEST(ToyTrain, SameSeedSameTrace) {
  Small s(6);
  TrainConfig tc;
  tc.batch_size = 2;
  tc.clip_norm = 1.0;
  const TrainResult a = toy_train(s.params, s.data.train, s.data.keypoints, s.cfg.refiner, 12, 0.01, tc);
  const TrainResult b = toy_train(s.params, s.data.train, s.data.keypoints, s.cfg.refiner, 12, 0.01, tc);
  EXPECT_EQ(a.trace, b.trace);
  expect_params_equal(a.params, b.params);
}

TEST(ToyTrain, ThreadCountDoesNotChangeResults) {
  Small s(6);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.threads = 1;
  const TrainResult a = toy_train(s.params, s.data.train, s.data.keypoints, s.cfg.refiner, 6, 0.01, tc);
  tc.threads = 3;
  const TrainResult b = toy_train(s.params, s.data.train, s.data.keypoints, s.cfg.refiner, 6, 0.01, tc);
  EXPECT_EQ(a.trace, b.trace);
  expect_params_equal(a.params, b.params);
}

TEST(ToyTrain, OverfitsOneScene) {
  Small s(1);
  TrainConfig tc;
  tc.clip_norm = 1.0;
  tc.cosine_decay = true;
  const TrainResult r = toy_train(s.params, s.data.train, s.data.keypoints, s.cfg.refiner, 1000, 0.01, tc);
  LossConfig lc;
  lc.n_refiners = s.cfg.refiner.steps;
  lc.lambda = lambda_schedule(1.0, lc.n_refiners);
  const double before = scene_loss(s.params, s.data.train[0], s.data.keypoints, s.cfg.refiner, lc, false).loss;
  const double after = scene_loss(r.params, s.data.train[0], s.data.keypoints, s.cfg.refiner, lc, false).loss;
  EXPECT_LT(after, 0.01 * before) << "before " << before << " after " << after;
}

TEST(ToyTrain, ExplodingStepIsDivergence) {
  Small s(2);
  TrainConfig tc;
  tc.batch_size = 0;
  EXPECT_THROW(toy_train(s.params, s.data.train, s.data.keypoints, s.cfg.refiner, 10, 1e12, tc),
               DivergenceDetected);
}

TEST(ToyTrain, NonFiniteParametersAreRejectedUpFront) {
  Small s(2);
  RefinerParams p = s.params;
  p.coarse_head.b2(0, 6) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(toy_train(p, s.data.train, s.data.keypoints, s.cfg.refiner, 2, 0.01, TrainConfig{}),
               InputError);
}

TEST(ToyTrain, RejectsBadArguments) {
  Small s(2);
  TrainConfig tc;
  EXPECT_THROW(toy_train(s.params, s.data.train, s.data.keypoints, s.cfg.refiner, -1, 0.01, tc), InputError);
  EXPECT_THROW(toy_train(s.params, {}, s.data.keypoints, s.cfg.refiner, 1, 0.01, tc), InputError);
}

TEST(SceneLoss, GradientHasParameterShapes) {
  Small s(1);
  LossConfig lc;
  const SceneLoss l = scene_loss(s.params, s.data.train[0], s.data.keypoints, s.cfg.refiner, lc, true);
  EXPECT_TRUE(std::isfinite(l.loss));
  EXPECT_FALSE(l.skipped);
  EXPECT_NO_THROW(validate_params(l.grad, s.cfg.refiner));
  EXPECT_GT(squared_norm(l.grad), 0.0);
}

TEST(Demo, ZeroStepsGiveEqualIterations) {
  DemoConfig cfg;
  cfg.steps = 0;
  cfg.scenes = 3;
  cfg.holdout = 6;
  cfg.model_points = 128;
  const DemoResult r = run_demo(cfg);
  ASSERT_EQ(r.iterations.size(), 4u);
  for (const IterationStats& it : r.iterations) {
    EXPECT_EQ(it.add, r.iterations[0].add);
    EXPECT_EQ(it.rotation_error_deg, r.iterations[0].rotation_error_deg);
  }
  EXPECT_TRUE(r.trace.empty());
}

TEST(Demo, TableFormat) {
  const std::vector<IterationStats> rows{{0, 132.06561, 0.2019461, 0.0}, {1, 5.5, 0.01, 0.75}};
  EXPECT_EQ(format_iteration_table(rows),
            "iteration  rot_err_deg  add_mm     add_acc_0.1d\n"
            "0             132.0656   201.9461        0.0000\n"
            "1               5.5000    10.0000        0.7500\n");
}

TEST(Demo, SceneSeedsAreDistinctPerStream) {
  EXPECT_NE(scene_seed(1, 1, 0), scene_seed(1, 2, 0));
  EXPECT_NE(scene_seed(1, 1, 0), scene_seed(1, 1, 1));
  EXPECT_NE(scene_seed(1, 1, 0), scene_seed(2, 1, 0));
  EXPECT_EQ(scene_seed(5, 1, 9), scene_seed(5, 1, 9));
}

}  // namespace
}  // namespace oskf
