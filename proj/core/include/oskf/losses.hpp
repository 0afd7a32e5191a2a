#pragma once

#include <span>

#include "oskf/geometry.hpp"
#include "oskf/keypoints.hpp"
#include "oskf/refiner_graph.hpp"

namespace oskf {

struct LossConfig {
  double alpha = 3.0;   ///< weight on the rotation term
  double lambda = 0.0;  ///< weight on the coarse term; refinements get 1 - lambda
  int n_refiners = 3;
  double training_progress = 0.0;

  void validate() const;
};

/// Mean over model points of |R_pred x - R_gt x|_1.
double rotation_loss(const Mat3& r_pred, const Mat3& r_gt, std::span<const Vec3> points);
/// rotation_loss against R_gt * S, minimised over the model's symmetries.
double rotation_loss_sym(const Mat3& r_pred, const Mat3& r_gt, const ObjectModel& model);
/// L1 distance between site encodings.
double position_loss(const SiteTranslation& pred, const SiteTranslation& gt);
/// alpha * L_R + L_pos; the symmetric L_R is used when the model has symmetries.
double step_loss(const PoseState& pred, const PoseState& gt, const ObjectModel& model,
                 const LossConfig& cfg);
/// lambda * L(coarse) + (1 - lambda) * sum of refinement losses. Throws
/// LengthMismatch unless there are n_refiners + 1 states.
double total_loss(std::span<const PoseState> states, const PoseState& gt, const ObjectModel& model,
                  const LossConfig& cfg);

/// 0 during the first 20% of training, (N - 1) / N afterwards.
double lambda_schedule(double progress, int n_refiners);

namespace graph {

/// Model points as an M x 3 matrix.
Matrix point_matrix(std::span<const Vec3> points);

Var rotation_loss(const Var& r_pred, const Mat3& r_gt, const Matrix& points);
Var rotation_loss_sym(const Var& r_pred, const Mat3& r_gt, const Matrix& points,
                      std::span<const Mat3> symmetries);
Var position_loss(const Var& site_pred, const SiteTranslation& gt);
Var step_loss(const StateVars& pred, const PoseState& gt, const Matrix& points,
              std::span<const Mat3> symmetries, const LossConfig& cfg);
Var total_loss(std::span<const StateVars> states, const PoseState& gt, const Matrix& points,
               std::span<const Mat3> symmetries, const LossConfig& cfg);

}  // namespace graph

}  // namespace oskf
