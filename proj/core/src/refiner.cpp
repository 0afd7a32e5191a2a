#include "oskf/refiner.hpp"

#include "oskf/error.hpp"
#include "oskf/refiner_graph.hpp"

namespace oskf {

namespace {

PoseState to_state(const graph::StateVars& s) {
  PoseState out;
  out.rotation = s.rotation.value();
  const Matrix& g = s.site.value();
  out.site = {g(0, 0), g(0, 1), g(0, 2)};
  return out;
}

graph::StateVars from_state(ad::Tape& tape, const PoseState& s) {
  Matrix site(1, 3);
  site << s.site.gamma_x, s.site.gamma_y, s.site.gamma_z;
  return {tape.constant(s.rotation), tape.constant(site)};
}

Matrix positions_matrix(std::span<const Vec2> positions) {
  Matrix m(static_cast<Eigen::Index>(positions.size()), 2);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = positions[i].x();
    m(static_cast<Eigen::Index>(i), 1) = positions[i].y();
  }
  return m;
}

PoseOffset to_offset(const Matrix& row) {
  PoseOffset o;
  o.delta_rotation.r1 = Vec3(row(0, 0), row(0, 1), row(0, 2));
  o.delta_rotation.r2 = Vec3(row(0, 3), row(0, 4), row(0, 5));
  o.delta_gamma = Vec3(row(0, 6), row(0, 7), row(0, 8));
  return o;
}

template <class VarsT, class ParamsT>
VarsT bind_struct(ad::Tape& tape, const ParamsT& p) {
  VarsT v;
  std::vector<const Matrix*> src;
  ParamsT::for_each(p, "", [&](const std::string&, const Matrix& m) { src.push_back(&m); });
  std::size_t i = 0;
  VarsT::for_each(v, "", [&](const std::string&, ad::Var& x) { x = tape.constant(*src[i++]); });
  return v;
}

}  // namespace

CoarseResult coarse_pose(const FeaturePyramid& pyramid, const RefinerParams& params,
                         const CropFrame& crop, const CameraIntrinsics& k) {
  ad::Tape tape;
  const MlpHeadVars head = bind_struct<MlpHeadVars>(tape, params.coarse_head);
  const graph::CoarseOutput out = graph::coarse_pose(pyramid, head, crop, k);
  CoarseResult r;
  r.state = to_state(out.state);
  r.pose = decode_state(r.state, crop, k);
  return r;
}

Eigen::VectorXd positional_embed(const Vec2& position_px, double crop_size, int d_model) {
  const Vec2 one[] = {position_px};
  return positional_embed(one, crop_size, d_model).row(0).transpose();
}

Matrix positional_embed(std::span<const Vec2> positions_px, double crop_size, int d_model) {
  if (d_model % 4 != 0) throw BadWidth("d_model must be divisible by 4");
  ad::Tape tape;
  return graph::positional_embedding(tape.constant(positions_matrix(positions_px)), crop_size,
                                     d_model)
      .value();
}

Matrix self_attention(const Matrix& q_in, const Matrix& embedding, const AttentionParams& params,
                      int heads, double eps) {
  ad::Tape tape;
  const AttentionVars p = bind_struct<AttentionVars>(tape, params);
  const ad::Var e = tape.constant(embedding);
  return graph::self_attention(tape.constant(q_in), &e, p, heads, eps).value();
}

Matrix self_attention(const Matrix& q_in, const AttentionParams& params, int heads, double eps) {
  ad::Tape tape;
  const AttentionVars p = bind_struct<AttentionVars>(tape, params);
  return graph::self_attention(tape.constant(q_in), nullptr, p, heads, eps).value();
}

DeformableResult deformable_attention(const Matrix& q_s, std::span<const Vec2> positions_px,
                                      const FeaturePyramid& pyramid,
                                      const DeformableParams& params, const RefinerConfig& config) {
  ad::Tape tape;
  const DeformableVars p = bind_struct<DeformableVars>(tape, params);
  const graph::DeformableOutput out = graph::deformable_attention(
      tape.constant(q_s), tape.constant(positions_matrix(positions_px)), pyramid, p, config);
  return {out.output.value(), out.head_outputs.value(), out.offsets_px.value(),
          out.weights.value()};
}

PoseOffset pose_head(const Matrix& q_p, const MlpHead& params) {
  if (q_p.rows() < 1) throw InputError("pose head needs at least one keypoint");
  ad::Tape tape;
  const MlpHeadVars p = bind_struct<MlpHeadVars>(tape, params);
  return to_offset(graph::pose_head(tape.constant(q_p), p).value());
}

StepResult refine_step(const PoseState& state, const Matrix& q_prev, const FeaturePyramid& pyramid,
                       const KeypointSet& keypoints, const CropFrame& crop,
                       const CameraIntrinsics& k, const StepParams& params,
                       const RefinerConfig& config) {
  ad::Tape tape;
  const StepVars p = bind_struct<StepVars>(tape, params);
  const graph::StepOutput out =
      graph::refine_step(from_state(tape, state), tape.constant(q_prev), pyramid,
                         graph::keypoint_matrix(keypoints), crop, k, p, config);
  return {to_state(out.state), out.query_next.value(), to_offset(out.offset.value())};
}

CascadeResult cascade(const FeaturePyramid& pyramid, const KeypointSet& keypoints,
                      const CropFrame& crop, const CameraIntrinsics& k,
                      const RefinerParams& params, const RefinerConfig& config) {
  ad::Tape tape;
  const RefinerVars vars = bind_params(tape, params, false);
  const std::vector<graph::StateVars> states =
      graph::cascade(pyramid, graph::keypoint_matrix(keypoints), crop, k, vars, config);
  CascadeResult r;
  for (const graph::StateVars& s : states) {
    r.states.push_back(to_state(s));
    r.poses.push_back(decode_state(r.states.back(), crop, k));
  }
  return r;
}

}  // namespace oskf
