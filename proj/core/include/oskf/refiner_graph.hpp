#pragma once

// Differentiable forward graph of the coarse head and refinement blocks.
// Every function records onto the tape of its Var arguments; binding the
// parameters as constants gives plain inference, binding them as variables
// gives gradients via Tape::backward.

#include <vector>

#include "oskf/autodiff.hpp"
#include "oskf/geometry.hpp"
#include "oskf/keypoints.hpp"
#include "oskf/pyramid.hpp"
#include "oskf/refiner_params.hpp"

namespace oskf::graph {

using ad::Var;

/// Rotation (3x3) and site translation (1x3: gamma_x, gamma_y, gamma_z).
struct StateVars {
  Var rotation;
  Var site;
};

Var recover_rotation(const Var& rot6d, const GeometryTolerances& tol = kDefaultTolerances);
Var view_rotation(const Var& t, const GeometryTolerances& tol = kDefaultTolerances);
/// Metric translation (1x3) of a site encoding.
Var decode_translation(const Var& site, const CropFrame& crop, const CameraIntrinsics& k);
/// Crop-pixel positions (Kx2) of object-frame keypoints (Kx3 constant).
Var project_to_crop(const Var& rotation, const Var& translation, const Matrix& keypoints,
                    const CropFrame& crop, const CameraIntrinsics& k, double crop_size,
                    const GeometryTolerances& tol = kDefaultTolerances);
/// apply_pose_offset on the tape; offset is 1x9.
StateVars apply_offset(const StateVars& prev, const Var& offset,
                       const GeometryTolerances& tol = kDefaultTolerances);

/// Sinusoidal embedding of crop-pixel positions (Kx2) -> K x d_model.
Var positional_embedding(const Var& positions_px, double crop_size, int d_model);

/// Samples every level at each position: K x (levels * channels).
Var sample_levels(const FeaturePyramid& pyramid, const Var& positions_px);

/// Multi-scale deformable aggregation. For keypoint k and head h returns
/// sum_{l,j} weights[k, (h*L+l)*J+j] * F_l(base_k + offsets_px[k, 2*((h*L+l)*J+j) .. +1])
/// laid out as K x (heads * channels).
Var deformable_aggregate(const FeaturePyramid& pyramid, const Var& base_px, const Var& offsets_px,
                         const Var& weights, int heads, int points);

/// Multi-head attention with query = key = q_in + pos (pos may be empty),
/// value = q_in, then residual and layer norm.
Var self_attention(const Var& q_in, const Var* pos, const AttentionVars& p, int heads, double eps);

struct DeformableOutput {
  Var output;          ///< K x d_model after residual + layer norm
  Var head_outputs;    ///< K x d_model, concatenated heads before the output projection
  Var offsets_px;      ///< K x (heads*levels*points*2)
  Var weights;         ///< K x (heads*levels*points), softmax per head
};

DeformableOutput deformable_attention(const Var& q_s, const Var& positions_px,
                                      const FeaturePyramid& pyramid, const DeformableVars& p,
                                      const RefinerConfig& config);

/// Mean-pool over keypoints, 2-layer MLP, plus the 6D identity: 1x9 offset.
Var pose_head(const Var& q_p, const MlpHeadVars& p);

/// Coarse estimate from the pooled last pyramid level. Returns the
/// egocentric state (rotation converted from allocentric with the decoded
/// translation) and the raw 1x9 head output.
struct CoarseOutput {
  StateVars state;
  Var raw;
};
CoarseOutput coarse_pose(const FeaturePyramid& pyramid, const MlpHeadVars& p, const CropFrame& crop,
                         const CameraIntrinsics& k);

struct StepOutput {
  StateVars state;
  Var query_next;  ///< deformable-attention output, reused as the next query
  Var offset;      ///< 1x9 pose offset
  Var positions_px;
  Var embedding;
  Var q_s;
  Var q_p;
};

StepOutput refine_step(const StateVars& state, const Var& q_prev, const FeaturePyramid& pyramid,
                       const Matrix& keypoints, const CropFrame& crop, const CameraIntrinsics& k,
                       const StepVars& p, const RefinerConfig& config);

/// Coarse state followed by `config.steps` refined states.
std::vector<StateVars> cascade(const FeaturePyramid& pyramid, const Matrix& keypoints,
                               const CropFrame& crop, const CameraIntrinsics& k,
                               const RefinerVars& params, const RefinerConfig& config);

/// Keypoints as a K x 3 matrix.
Matrix keypoint_matrix(const KeypointSet& keypoints);

}  // namespace oskf::graph
