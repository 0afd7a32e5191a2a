#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "oskf/error.hpp"
#include "oskf/refiner.hpp"
#include "oskf/synth.hpp"

namespace oskf {
namespace {

using fixtures::random_matrix;
using fixtures::uniform;

double max_abs(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

RefinerConfig small_config() {
  RefinerConfig c;
  c.d_model = 16;
  c.heads = 2;
  c.points = 4;
  c.levels = 2;
  c.channels = 8;
  c.keypoints = 8;
  c.steps = 2;
  return c;
}

MlpHead random_head(Rng& rng, int in, int hidden) {
  MlpHead h;
  h.w1 = random_matrix(rng, in, hidden, 0.5);
  h.b1 = random_matrix(rng, 1, hidden, 0.1);
  h.w2 = random_matrix(rng, hidden, 9, 0.3);
  h.b2 = random_matrix(rng, 1, 9, 0.1);
  return h;
}

Matrix permute_rows(const Matrix& m, const std::vector<int>& perm) {
  Matrix out(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[i]);
  return out;
}

// ---------------------------------------------------------------- coarse head

TEST(CoarseHead, ZeroRotationOutputsAreDegenerate) {
  RefinerConfig c = small_config();
  RefinerParams p = shaped_params(c);
  p.coarse_head.b2(0, 8) = 1.0;
  Rng rng(1);
  const FeaturePyramid pyr = fixtures::random_pyramid(rng, c.levels, c.channels, 64);
  EXPECT_THROW(coarse_pose(pyr, p, CropFrame::square(Vec2(320, 240), 100), CameraIntrinsics{}),
               DegenerateRotation);
}

TEST(CoarseHead, IdentityCraftedWeights) {
  RefinerConfig c = small_config();
  RefinerParams p = shaped_params(c);
  const double g = 0.7;
  p.coarse_head.b2(0, 0) = 1.0;  // r1 = x
  p.coarse_head.b2(0, 4) = 1.0;  // r2 = y
  p.coarse_head.b2(0, 8) = g;
  Rng rng(2);
  const FeaturePyramid pyr = fixtures::random_pyramid(rng, c.levels, c.channels, 64);
  const CameraIntrinsics k;
  const CropFrame crop = CropFrame::square(Vec2(410, 150), 160);
  const CoarseResult r = coarse_pose(pyr, p, crop, k);

  const double gz = std::log1p(std::exp(g));
  const double depth = gz * crop.ratio();
  const Vec3 t = back_project(crop.center, depth, k);
  EXPECT_LE((r.pose.translation - t).norm(), 1e-12);
  EXPECT_LE(max_abs(r.pose.rotation, view_rotation(t)), 1e-12);
  EXPECT_NEAR(r.state.site.gamma_x, 0.0, 0.0);
  EXPECT_NEAR(r.state.site.gamma_z, gz, 1e-15);
}

TEST(CoarseHead, InvariantToCellPermutation) {
  RefinerConfig c = small_config();
  Rng rng(3);
  RefinerParams p = shaped_params(c);
  p.coarse_head = random_head(rng, c.channels, c.hidden_width());
  p.coarse_head.b2(0, 0) += 1.0;
  p.coarse_head.b2(0, 4) += 1.0;
  FeaturePyramid pyr = fixtures::random_pyramid(rng, c.levels, c.channels, 64);
  const CropFrame crop = CropFrame::square(Vec2(300, 250), 120);
  const CoarseResult a = coarse_pose(pyr, p, crop, CameraIntrinsics{});

  // Reverse the cell order of the pooled (last) level.
  FeatureMap& last = pyr.levels.back();
  const int cells = last.height() * last.width();
  std::vector<double> copy(last.data().begin(), last.data().end());
  for (int i = 0; i < cells; ++i) {
    std::copy_n(copy.begin() + (cells - 1 - i) * c.channels, c.channels,
                last.data().begin() + i * c.channels);
  }
  const CoarseResult b = coarse_pose(pyr, p, crop, CameraIntrinsics{});
  EXPECT_LE(max_abs(a.pose.rotation, b.pose.rotation), 1e-12);
  EXPECT_LE((a.pose.translation - b.pose.translation).norm(), 1e-12);
}

// ------------------------------------------------------- positional embedding

TEST(PositionalEmbed, OriginIsSinZeroCosOne) {
  const Eigen::VectorXd e = positional_embed(Vec2(0, 0), 128, 32);
  ASSERT_EQ(e.size(), 32);
  for (int axis = 0; axis < 2; ++axis) {
    for (int i = 0; i < 8; ++i) {
      EXPECT_EQ(e[axis * 16 + i], 0.0);
      EXPECT_EQ(e[axis * 16 + 8 + i], 1.0);
    }
  }
}

TEST(PositionalEmbed, AxisBlockNormBound) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd e = positional_embed(Vec2(uniform(rng, -50, 200), uniform(rng, -50, 200)), 128, 32);
    for (int axis = 0; axis < 2; ++axis) {
      const double n = e.segment(axis * 16, 16).norm();
      EXPECT_LE(n, std::sqrt(16.0) + 1e-12);
      EXPECT_NEAR(n, std::sqrt(8.0), 1e-12);  // sin^2 + cos^2 per frequency
    }
  }
}

TEST(PositionalEmbed, InjectiveOnGrid) {
  std::vector<Eigen::VectorXd> all;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) all.push_back(positional_embed(Vec2(8.0 * x + 4, 8.0 * y + 4), 128, 16));
  }
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) min_gap = std::min(min_gap, (all[i] - all[j]).norm());
  }
  EXPECT_GT(min_gap, 1e-6);
}

TEST(PositionalEmbed, MatchesFormula) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const Vec2 p(uniform(rng, 0, 128), uniform(rng, 0, 128));
    const Eigen::VectorXd e = positional_embed(p, 128, 32);
    const std::vector<double> o = oracle::positional(p.x(), p.y(), 128, 32);
    for (int j = 0; j < 32; ++j) EXPECT_NEAR(e[j], o[j], 1e-12);
  }
}

TEST(PositionalEmbed, RejectsBadWidth) {
  EXPECT_THROW(positional_embed(Vec2(1, 1), 128, 30), BadWidth);
}

// ------------------------------------------------------------ self-attention

TEST(SelfAttention, SingleTokenIsResidualOfValuePath) {
  Rng rng(6);
  const AttentionParams a = fixtures::random_attention(rng, 8);
  const Matrix q = random_matrix(rng, 1, 8, 1.0);
  const Matrix e = random_matrix(rng, 1, 8, 1.0);
  const Matrix v = q * a.wv + a.bv;
  const Matrix expected = oracle::layer_norm(q + v * a.wo + a.bo, a.ln_gain, a.ln_bias, 1e-5);
  EXPECT_LE(max_abs(self_attention(q, e, a, 2), expected), 1e-12);
}

TEST(SelfAttention, PermutationEquivariant) {
  Rng rng(7);
  const AttentionParams a = fixtures::random_attention(rng, 16);
  const Matrix q = random_matrix(rng, 6, 16, 1.0);
  const Matrix e = random_matrix(rng, 6, 16, 1.0);
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};
  const Matrix out = self_attention(q, e, a, 4);
  const Matrix out_p = self_attention(permute_rows(q, perm), permute_rows(e, perm), a, 4);
  EXPECT_LE(max_abs(out_p, permute_rows(out, perm)), 1e-12);
}

TEST(SelfAttention, MatchesLoopOracle) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const AttentionParams a = fixtures::random_attention(rng, 8);
    const Matrix q = random_matrix(rng, 4, 8, 1.0);
    const Matrix e = random_matrix(rng, 4, 8, 1.0);
    EXPECT_LE(max_abs(self_attention(q, e, a, 2), oracle::self_attention(q, &e, a, 2, 1e-5)), 1e-10);
    EXPECT_LE(max_abs(self_attention(q, a, 2), oracle::self_attention(q, nullptr, a, 2, 1e-5)), 1e-10);
  }
}

TEST(SelfAttention, ShapeErrors) {
  Rng rng(9);
  const AttentionParams a = fixtures::random_attention(rng, 8);
  EXPECT_THROW(self_attention(random_matrix(rng, 4, 6, 1.0), a, 2), InputError);
  EXPECT_THROW(self_attention(random_matrix(rng, 4, 8, 1.0), a, 3), InputError);
}

// ------------------------------------------------------- deformable attention

TEST(DeformableAttention, ConstantPyramidGivesProjectedValue) {
  RefinerConfig c = small_config();
  Rng rng(10);
  DeformableParams p = fixtures::random_deformable(rng, c);
  p.offset_w.setZero();
  p.offset_b.setZero();
  FeaturePyramid pyr = FeaturePyramid::standard_layout(c.levels, c.channels, 64);
  Eigen::VectorXd v(c.channels);
  for (int ch = 0; ch < c.channels; ++ch) v[ch] = 0.3 * ch - 1.0;
  for (FeatureMap& m : pyr.levels) {
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        for (int ch = 0; ch < c.channels; ++ch) m.at(y, x, ch) = v[ch];
      }
    }
  }
  const Matrix qs = random_matrix(rng, c.keypoints, c.d_model, 1.0);
  std::vector<Vec2> pos;
  for (int k = 0; k < c.keypoints; ++k) pos.emplace_back(uniform(rng, 8, 56), uniform(rng, 8, 56));
  const DeformableResult r = deformable_attention(qs, pos, pyr, p, c);
  const Eigen::RowVectorXd wv = v.transpose() * p.value_w;  // every head block: W_h v
  for (int k = 0; k < c.keypoints; ++k) {
    EXPECT_LE((r.head_outputs.row(k) - wv).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DeformableAttention, AttentionWeightsSumToOnePerHead) {
  RefinerConfig c = small_config();
  Rng rng(11);
  const DeformableParams p = fixtures::random_deformable(rng, c);
  const FeaturePyramid pyr = fixtures::random_pyramid(rng, c.levels, c.channels, 64);
  const Matrix qs = random_matrix(rng, c.keypoints, c.d_model, 1.0);
  std::vector<Vec2> pos(c.keypoints, Vec2(32, 32));
  const DeformableResult r = deformable_attention(qs, pos, pyr, p, c);
  const int per_head = c.levels * c.points;
  for (int k = 0; k < c.keypoints; ++k) {
    for (int h = 0; h < c.heads; ++h) {
      EXPECT_NEAR(r.weights.row(k).segment(h * per_head, per_head).sum(), 1.0, 1e-12);
    }
  }
}

TEST(DeformableAttention, MatchesLoopOracle) {
  RefinerConfig c = small_config();
  Rng rng(12);
  for (int t = 0; t < 10; ++t) {
    const DeformableParams p = fixtures::random_deformable(rng, c);
    const FeaturePyramid pyr = fixtures::random_pyramid(rng, c.levels, c.channels, 64);
    const Matrix qs = random_matrix(rng, c.keypoints, c.d_model, 1.0);
    std::vector<Vec2> pos;
    for (int k = 0; k < c.keypoints; ++k) pos.emplace_back(uniform(rng, -4, 68), uniform(rng, -4, 68));
    const DeformableResult r = deformable_attention(qs, pos, pyr, p, c);
    const auto o = oracle::deformable_attention(qs, pos, pyr, p, c.heads, c.points, c.layer_norm_eps);
    EXPECT_LE(max_abs(r.head_outputs, o.head_outputs), 1e-10);
    EXPECT_LE(max_abs(r.output, o.output), 1e-10);
  }
}

// ------------------------------------------------------------------ pose head

TEST(PoseHead, ZeroHeadIsIdentityOffset) {
  MlpHead h;
  h.w1 = Matrix::Zero(16, 16);
  h.b1 = Matrix::Zero(1, 16);
  h.w2 = Matrix::Zero(16, 9);
  h.b2 = Matrix::Zero(1, 9);
  Rng rng(13);
  const PoseOffset o = pose_head(random_matrix(rng, 8, 16, 1.0), h);
  EXPECT_EQ(o.delta_rotation.r1, Vec3::UnitX());
  EXPECT_EQ(o.delta_rotation.r2, Vec3::UnitY());
  EXPECT_EQ(o.delta_gamma, Vec3::Zero());
  const PoseState s{fixtures::random_rotation(rng), {0.2, 0.1, 3.0}};
  const PoseState n = apply_pose_offset(s, o);
  EXPECT_EQ(n.rotation, s.rotation);
  EXPECT_EQ(n.site.as_vector(), s.site.as_vector());
}

TEST(PoseHead, InvariantToKeypointOrder) {
  Rng rng(14);
  const MlpHead h = random_head(rng, 16, 16);
  const Matrix q = random_matrix(rng, 8, 16, 1.0);
  const PoseOffset a = pose_head(q, h);
  const PoseOffset b = pose_head(permute_rows(q, {7, 6, 5, 4, 3, 2, 1, 0}), h);
  EXPECT_LE((a.delta_rotation.r1 - b.delta_rotation.r1).norm(), 1e-14);
  EXPECT_LE((a.delta_rotation.r2 - b.delta_rotation.r2).norm(), 1e-14);
  EXPECT_LE((a.delta_gamma - b.delta_gamma).norm(), 1e-14);
}

TEST(PoseHead, MatchesMatmulOracle) {
  Rng rng(15);
  for (int t = 0; t < 20; ++t) {
    const MlpHead h = random_head(rng, 16, 24);
    const Matrix q = random_matrix(rng, 8, 16, 1.0);
    const PoseOffset o = pose_head(q, h);
    const std::vector<double> ref = oracle::pose_head(q, h);
    for (int i = 0; i < 3; ++i) {
      EXPECT_NEAR(o.delta_rotation.r1[i], ref[i], 1e-12);
      EXPECT_NEAR(o.delta_rotation.r2[i], ref[3 + i], 1e-12);
      EXPECT_NEAR(o.delta_gamma[i], ref[6 + i], 1e-12);
    }
  }
}

// ------------------------------------------------------------- step / cascade

struct Fixture {
  RefinerConfig config = small_config();
  SynthScene scene;
  KeypointSet keypoints;
  RefinerParams params;

  explicit Fixture(std::uint64_t seed) {
    SynthConfig sc;
    sc.pyramid.crop_size = 64;
    sc.pyramid.levels = config.levels;
    sc.pyramid.channels = config.channels;
    scene = make_scene(synthetic_model(128), sc, seed);
    keypoints = farthest_point_sample(scene.model, static_cast<std::size_t>(config.keypoints));
    params = init_refiner_params(config, seed);
    set_coarse_depth_prior(params, encode_pose(scene.gt_pose, scene.crop, scene.k).site.gamma_z);
  }
};

TEST(RefineStep, ZeroPoseHeadKeepsState) {
  Fixture f(21);
  zero_pose_heads(f.params);
  const PoseState s0 = encode_pose(f.scene.gt_pose, f.scene.crop, f.scene.k);
  const StepResult r = refine_step(s0, f.params.initial_query, f.scene.pyramid, f.keypoints,
                                   f.scene.crop, f.scene.k, f.params.steps[0], f.config);
  EXPECT_EQ(r.state.rotation, s0.rotation);
  EXPECT_EQ(r.state.site.as_vector(), s0.site.as_vector());
}

TEST(RefineStep, RecycledQueryIsDeformableOutput) {
  Fixture f(22);
  const StepParams& sp = f.params.steps[0];
  const PoseState s0 = encode_pose(f.scene.gt_pose, f.scene.crop, f.scene.k);
  const StepResult r = refine_step(s0, f.params.initial_query, f.scene.pyramid, f.keypoints,
                                   f.scene.crop, f.scene.k, sp, f.config);
  ASSERT_EQ(r.query_next.rows(), f.config.keypoints);
  ASSERT_EQ(r.query_next.cols(), f.config.d_model);

  // Rebuild the deformable input with the public entry points.
  const Pose pose = decode_state(s0, f.scene.crop, f.scene.k);
  std::vector<Vec2> pos;
  for (const Vec2& px : project_keypoints(f.keypoints.keypoints, pose, f.scene.k)) {
    pos.push_back(image_to_crop(px, f.scene.crop, f.scene.pyramid.crop_size));
  }
  const OskfSet feats = extract_oskf(f.scene.pyramid, pos);
  const Matrix q_in = f.params.initial_query +
                      ((feats.features * sp.input_w).rowwise() + sp.input_b.row(0));
  const Matrix embed = positional_embed(pos, f.scene.pyramid.crop_size, f.config.d_model);
  const Matrix q_s = self_attention(q_in, embed, sp.self_attn, f.config.heads);
  const DeformableResult d = deformable_attention(q_s, pos, f.scene.pyramid, sp.deform, f.config);
  EXPECT_LE(max_abs(r.query_next, d.output), 1e-12);
}

TEST(Cascade, NoStepsReturnsCoarseOnly) {
  Fixture f(23);
  RefinerConfig c = f.config;
  c.steps = 0;
  RefinerParams p = init_refiner_params(c, 3);
  const CascadeResult r = cascade(f.scene.pyramid, f.keypoints, f.scene.crop, f.scene.k, p, c);
  ASSERT_EQ(r.poses.size(), 1u);
  const CoarseResult coarse = coarse_pose(f.scene.pyramid, p, f.scene.crop, f.scene.k);
  EXPECT_EQ(r.poses[0].translation, coarse.pose.translation);
}

TEST(Cascade, ZeroPoseHeadsGiveIdenticalPoses) {
  Fixture f(24);
  zero_pose_heads(f.params);
  const CascadeResult r =
      cascade(f.scene.pyramid, f.keypoints, f.scene.crop, f.scene.k, f.params, f.config);
  ASSERT_EQ(r.poses.size(), static_cast<std::size_t>(f.config.steps + 1));
  for (const Pose& p : r.poses) {
    EXPECT_EQ(p.rotation, r.poses[0].rotation);
    EXPECT_EQ(p.translation, r.poses[0].translation);
  }
}

TEST(Cascade, RandomParametersGiveValidPoses) {
  Fixture f(25);
  Rng rng(26);
  for (int draw = 0; draw < 100; ++draw) {
    RefinerParams p = f.params;
    for (StepParams& s : p.steps) {
      s.pose_head.w2 = random_matrix(rng, s.pose_head.w2.rows(), 9, 0.02);
      s.pose_head.b2 = random_matrix(rng, 1, 9, 0.02);
    }
    const CascadeResult r = cascade(f.scene.pyramid, f.keypoints, f.scene.crop, f.scene.k, p, f.config);
    ASSERT_EQ(r.poses.size(), static_cast<std::size_t>(f.config.steps + 1));
    for (const Pose& pose : r.poses) EXPECT_TRUE(is_valid_pose(pose));
  }
}

TEST(Params, ValidateNamesTheBadTensor) {
  RefinerConfig c = small_config();
  RefinerParams p = init_refiner_params(c, 1);
  EXPECT_NO_THROW(validate_params(p, c));
  p.steps[1].deform.value_w = Matrix::Zero(3, 3);
  try {
    validate_params(p, c);
    FAIL() << "expected ShapeMismatch";
  } catch (const ShapeMismatch& e) {
    EXPECT_NE(std::string(e.what()).find("step1.deform.value_w"), std::string::npos) << e.what();
  }
}

TEST(Params, InitIsDeterministic) {
  RefinerConfig c = small_config();
  const RefinerParams a = init_refiner_params(c, 9), b = init_refiner_params(c, 9);
  std::vector<Matrix> ta, tb;
  a.visit([&](const std::string&, const Matrix& m) { ta.push_back(m); });
  b.visit([&](const std::string&, const Matrix& m) { tb.push_back(m); });
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i], tb[i]);
}

TEST(Config, RejectsIndivisibleHeads) {
  RefinerConfig c = small_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), InputError);
}

}  // namespace
}  // namespace oskf
