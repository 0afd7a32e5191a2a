#include <gtest/gtest.h>

#include <numbers>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "oskf/error.hpp"
#include "oskf/losses.hpp"

namespace oskf {
namespace {

Mat3 rz(double a) { return oracle::axis_angle(Vec3::UnitZ(), a); }

std::vector<Vec3> random_points(Rng& rng, int n) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) pts.push_back(0.05 * fixtures::normal3(rng));
  return pts;
}

TEST(RotationLoss, EqualRotationsGiveZero) {
  Rng rng(1);
  const Mat3 r = fixtures::random_rotation(rng);
  EXPECT_EQ(rotation_loss(r, r, random_points(rng, 20)), 0.0);
}

TEST(RotationLoss, HalfTurnSinglePoint) {
  const std::vector<Vec3> pts{Vec3(1, 0, 0)};
  EXPECT_NEAR(rotation_loss(rz(std::numbers::pi), Mat3::Identity(), pts), 2.0, 1e-15);
}

TEST(RotationLoss, MatchesLoopOracle) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Mat3 a = fixtures::random_rotation(rng), b = fixtures::random_rotation(rng);
    const auto pts = random_points(rng, 64);
    EXPECT_NEAR(rotation_loss(a, b, pts), oracle::rotation_loss(a, b, pts), 1e-14);
  }
}

TEST(RotationLoss, EmptyModelThrows) {
  EXPECT_THROW(rotation_loss(Mat3::Identity(), Mat3::Identity(), {}), EmptyModel);
}

TEST(RotationLossSym, IdentityOnlyReducesToPlain) {
  Rng rng(3);
  const ObjectModel m = ObjectModel::from_points(random_points(rng, 30));
  const Mat3 a = fixtures::random_rotation(rng), b = fixtures::random_rotation(rng);
  EXPECT_EQ(rotation_loss_sym(a, b, m), rotation_loss(a, b, m.points));
}

TEST(RotationLossSym, FlipIsAbsorbed) {
  Rng rng(4);
  const ObjectModel m = ObjectModel::from_points(random_points(rng, 30), {rz(std::numbers::pi)});
  const Mat3 gt = fixtures::random_rotation(rng);
  EXPECT_NEAR(rotation_loss_sym(gt * rz(std::numbers::pi), gt, m), 0.0, 1e-14);
  EXPECT_GT(rotation_loss(gt * rz(std::numbers::pi), gt, m.points), 0.01);
}

TEST(RotationLossSym, MatchesBruteForceOverGroup) {
  Rng rng(5);
  std::vector<Mat3> group;
  for (int i = 1; i < 8; ++i) group.push_back(rz(2 * std::numbers::pi * i / 8));
  const ObjectModel m = ObjectModel::from_points(random_points(rng, 40), group);
  ASSERT_EQ(m.symmetries.size(), 8u);
  for (int t = 0; t < 30; ++t) {
    const Mat3 a = fixtures::random_rotation(rng), b = fixtures::random_rotation(rng);
    double best = oracle::rotation_loss(a, b, m.points);
    for (int i = 1; i < 8; ++i) {
      best = std::min(best, oracle::rotation_loss(a, b * rz(2 * std::numbers::pi * i / 8), m.points));
    }
    EXPECT_NEAR(rotation_loss_sym(a, b, m), best, 1e-14);
  }
}

TEST(PositionLoss, Examples) {
  EXPECT_EQ(position_loss({0.1, -0.2, 3.0}, {0.1, -0.2, 3.0}), 0.0);
  EXPECT_NEAR(position_loss({0.1, -0.2, 3.0}, {0.0, 0.0, 3.5}), 0.8, 1e-15);
  EXPECT_EQ(position_loss({0.1, -0.2, 3.0}, {0.0, 0.0, 3.5}),
            position_loss({0.0, 0.0, 3.5}, {0.1, -0.2, 3.0}));
}

TEST(StepLoss, ExactPredictionIsZero) {
  Rng rng(6);
  const ObjectModel m = ObjectModel::from_points(random_points(rng, 20));
  const PoseState s{fixtures::random_rotation(rng), {0.1, 0.2, 3.0}};
  EXPECT_EQ(step_loss(s, s, m, LossConfig{}), 0.0);
}

TEST(StepLoss, WeightedSumExample) {
  // One point at x = 0.25 and a half turn about z: L_R = 0.5. Site offset 0.2.
  const ObjectModel m{{Vec3(0.25, 0, 0)}, 0.25, {Mat3::Identity()}};
  const PoseState gt{Mat3::Identity(), {0.0, 0.0, 3.0}};
  const PoseState pred{rz(std::numbers::pi), {0.2, 0.0, 3.0}};
  LossConfig cfg;
  EXPECT_NEAR(step_loss(pred, gt, m, cfg), 1.7, 1e-15);
  cfg.alpha = 6.0;
  EXPECT_NEAR(step_loss(pred, gt, m, cfg), 3.2, 1e-15);  // only the rotation part doubles
}

std::vector<PoseState> states_with_loss(const PoseState& gt, const std::vector<double>& offsets) {
  std::vector<PoseState> out;
  for (double d : offsets) out.push_back({gt.rotation, {gt.site.gamma_x + d, gt.site.gamma_y, gt.site.gamma_z}});
  return out;
}

TEST(TotalLoss, LambdaWeights) {
  const ObjectModel m{{Vec3(0.1, 0, 0)}, 0.1, {Mat3::Identity()}};
  const PoseState gt{Mat3::Identity(), {0, 0, 2}};
  const auto states = states_with_loss(gt, {0.4, 0.1, 0.2, 0.3});
  LossConfig cfg;
  cfg.lambda = 1.0;
  EXPECT_NEAR(total_loss(states, gt, m, cfg), 0.4, 1e-15);
  cfg.lambda = 0.0;
  EXPECT_NEAR(total_loss(states, gt, m, cfg), 0.6, 1e-15);
}

TEST(TotalLoss, EqualStepLossesWithScheduledLambda) {
  const ObjectModel m{{Vec3(0.1, 0, 0)}, 0.1, {Mat3::Identity()}};
  const PoseState gt{Mat3::Identity(), {0, 0, 2}};
  const double l = 0.25;
  LossConfig cfg;
  cfg.lambda = 2.0 / 3.0;
  EXPECT_NEAR(total_loss(states_with_loss(gt, {l, l, l, l}), gt, m, cfg), 5.0 / 3.0 * l, 1e-15);
}

TEST(TotalLoss, WrongStateCountThrows) {
  const ObjectModel m{{Vec3(0.1, 0, 0)}, 0.1, {Mat3::Identity()}};
  const PoseState gt;
  EXPECT_THROW(total_loss(states_with_loss(gt, {0, 0}), gt, m, LossConfig{}), LengthMismatch);
}

TEST(LambdaSchedule, Values) {
  EXPECT_EQ(lambda_schedule(0.1, 3), 0.0);
  EXPECT_EQ(lambda_schedule(0.0, 3), 0.0);
  EXPECT_DOUBLE_EQ(lambda_schedule(0.5, 3), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(lambda_schedule(0.2, 3), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(lambda_schedule(1.0, 1), 0.0);
  EXPECT_THROW(lambda_schedule(0.5, 0), InputError);
}

TEST(LossConfig, Validation) {
  LossConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(GraphLosses, ValuesMatchPlainVersions) {
  Rng rng(7);
  std::vector<Mat3> group{rz(std::numbers::pi)};
  const ObjectModel m = ObjectModel::from_points(random_points(rng, 25), group);
  const Matrix pts = graph::point_matrix(m.points);
  const PoseState gt{fixtures::random_rotation(rng), {0.05, -0.02, 2.2}};
  std::vector<PoseState> states;
  for (int i = 0; i < 4; ++i) {
    states.push_back({fixtures::random_rotation(rng),
                      {fixtures::uniform(rng, -0.1, 0.1), fixtures::uniform(rng, -0.1, 0.1), 2.0 + 0.1 * i}});
  }
  ad::Tape tape;
  std::vector<graph::StateVars> vars;
  for (const PoseState& s : states) {
    Matrix site(1, 3);
    site << s.site.gamma_x, s.site.gamma_y, s.site.gamma_z;
    vars.push_back({tape.constant(s.rotation), tape.constant(site)});
  }
  LossConfig cfg;
  cfg.lambda = 0.4;
  EXPECT_NEAR(graph::rotation_loss(vars[0].rotation, gt.rotation, pts).value()(0, 0),
              rotation_loss(states[0].rotation, gt.rotation, m.points), 1e-14);
  EXPECT_NEAR(graph::rotation_loss_sym(vars[1].rotation, gt.rotation, pts, m.symmetries).value()(0, 0),
              rotation_loss_sym(states[1].rotation, gt.rotation, m), 1e-14);
  EXPECT_NEAR(graph::total_loss(vars, gt, pts, m.symmetries, cfg).value()(0, 0),
              total_loss(states, gt, m, cfg), 1e-13);
}

}  // namespace
}  // namespace oskf
