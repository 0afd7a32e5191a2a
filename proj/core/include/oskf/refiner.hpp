#pragma once

// Inference entry points of the pose refiner. These evaluate the same
// graph as refiner_graph.hpp on a constant-only tape.

#include <span>
#include <vector>

#include "oskf/geometry.hpp"
#include "oskf/keypoints.hpp"
#include "oskf/pyramid.hpp"
#include "oskf/refiner_params.hpp"

namespace oskf {

struct CoarseResult {
  PoseState state;  ///< egocentric rotation + site encoding
  Pose pose;        ///< decoded metric pose
};

CoarseResult coarse_pose(const FeaturePyramid& pyramid, const RefinerParams& params,
                         const CropFrame& crop, const CameraIntrinsics& k);

/// Sinusoidal embedding of a crop-pixel position normalised by crop_size:
/// x block [sin(w_i x) | cos(w_i x)] then the y block, w_i = 2 pi 10000^(-4i/d).
Eigen::VectorXd positional_embed(const Vec2& position_px, double crop_size, int d_model);
Matrix positional_embed(std::span<const Vec2> positions_px, double crop_size, int d_model);

Matrix self_attention(const Matrix& q_in, const Matrix& embedding, const AttentionParams& params,
                      int heads, double eps = 1e-5);
/// Variant without positional terms (query = key = value input).
Matrix self_attention(const Matrix& q_in, const AttentionParams& params, int heads,
                      double eps = 1e-5);

struct DeformableResult {
  Matrix output;        ///< after residual + layer norm
  Matrix head_outputs;  ///< concatenated per-head sums, before output projection
  Matrix offsets_px;
  Matrix weights;
};

DeformableResult deformable_attention(const Matrix& q_s, std::span<const Vec2> positions_px,
                                      const FeaturePyramid& pyramid,
                                      const DeformableParams& params, const RefinerConfig& config);

PoseOffset pose_head(const Matrix& q_p, const MlpHead& params);

struct StepResult {
  PoseState state;
  Matrix query_next;
  PoseOffset offset;
};

StepResult refine_step(const PoseState& state, const Matrix& q_prev, const FeaturePyramid& pyramid,
                       const KeypointSet& keypoints, const CropFrame& crop,
                       const CameraIntrinsics& k, const StepParams& params,
                       const RefinerConfig& config);

struct CascadeResult {
  std::vector<PoseState> states;  ///< coarse first, then one per refinement step
  std::vector<Pose> poses;
};

CascadeResult cascade(const FeaturePyramid& pyramid, const KeypointSet& keypoints,
                      const CropFrame& crop, const CameraIntrinsics& k,
                      const RefinerParams& params, const RefinerConfig& config);

}  // namespace oskf
