#include "oskf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "oskf/error.hpp"

namespace oskf {

void LossConfig::validate() const {
  if (!(alpha > 0.0)) throw InputError("alpha must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InputError("lambda must lie in [0, 1]");
  if (n_refiners < 0) throw InputError("n_refiners must be non-negative");
  if (!(training_progress >= 0.0 && training_progress <= 1.0)) {
    throw InputError("training_progress must lie in [0, 1]");
  }
}

double rotation_loss(const Mat3& r_pred, const Mat3& r_gt, std::span<const Vec3> points) {
  if (points.empty()) throw EmptyModel("rotation loss over an empty point set");
  const Mat3 diff = r_pred - r_gt;
  double total = 0.0;
  for (const Vec3& x : points) total += (diff * x).lpNorm<1>();
  return total / static_cast<double>(points.size());
}

double rotation_loss_sym(const Mat3& r_pred, const Mat3& r_gt, const ObjectModel& model) {
  if (model.points.empty()) throw EmptyModel("rotation loss over an empty model");
  double best = std::numeric_limits<double>::infinity();
  for (const Mat3& s : model.symmetries) {
    best = std::min(best, rotation_loss(r_pred, r_gt * s, model.points));
  }
  return best;
}

double position_loss(const SiteTranslation& pred, const SiteTranslation& gt) {
  return std::abs(pred.gamma_x - gt.gamma_x) + std::abs(pred.gamma_y - gt.gamma_y) +
         std::abs(pred.gamma_z - gt.gamma_z);
}

double step_loss(const PoseState& pred, const PoseState& gt, const ObjectModel& model,
                 const LossConfig& cfg) {
  const double lr = model.is_symmetric() ? rotation_loss_sym(pred.rotation, gt.rotation, model)
                                         : rotation_loss(pred.rotation, gt.rotation, model.points);
  return cfg.alpha * lr + position_loss(pred.site, gt.site);
}

double total_loss(std::span<const PoseState> states, const PoseState& gt, const ObjectModel& model,
                  const LossConfig& cfg) {
  if (states.size() != static_cast<std::size_t>(cfg.n_refiners) + 1) {
    throw LengthMismatch("expected " + std::to_string(cfg.n_refiners + 1) + " states, got " +
                         std::to_string(states.size()));
  }
  double refine = 0.0;
  for (std::size_t i = 1; i < states.size(); ++i) refine += step_loss(states[i], gt, model, cfg);
  return cfg.lambda * step_loss(states[0], gt, model, cfg) + (1.0 - cfg.lambda) * refine;
}

double lambda_schedule(double progress, int n_refiners) {
  if (n_refiners < 1) throw InputError("lambda schedule needs at least one refiner");
  if (progress < 0.2) return 0.0;
  return static_cast<double>(n_refiners - 1) / static_cast<double>(n_refiners);
}

namespace graph {

Matrix point_matrix(std::span<const Vec3> points) {
  Matrix m(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  }
  return m;
}

Var rotation_loss(const Var& r_pred, const Mat3& r_gt, const Matrix& points) {
  if (points.rows() == 0) throw EmptyModel("rotation loss over an empty point set");
  ad::Tape& tape = *r_pred.tape();
  const Var diff = ad::sub(r_pred, tape.constant(r_gt));
  // rows of X * diff^T are (diff x_i)^T
  const Var moved = ad::matmul(tape.constant(points), ad::transpose(diff));
  return ad::scale(ad::sum(ad::abs(moved)), 1.0 / static_cast<double>(points.rows()));
}

Var rotation_loss_sym(const Var& r_pred, const Mat3& r_gt, const Matrix& points,
                      std::span<const Mat3> symmetries) {
  if (symmetries.empty()) return rotation_loss(r_pred, r_gt, points);
  std::vector<Var> candidates;
  candidates.reserve(symmetries.size());
  for (const Mat3& s : symmetries) candidates.push_back(rotation_loss(r_pred, r_gt * s, points));
  return ad::min_of(candidates);
}

Var position_loss(const Var& site_pred, const SiteTranslation& gt) {
  Matrix g(1, 3);
  g << gt.gamma_x, gt.gamma_y, gt.gamma_z;
  return ad::sum(ad::abs(ad::sub(site_pred, site_pred.tape()->constant(g))));
}

Var step_loss(const StateVars& pred, const PoseState& gt, const Matrix& points,
              std::span<const Mat3> symmetries, const LossConfig& cfg) {
  const Var lr = symmetries.size() > 1 ? rotation_loss_sym(pred.rotation, gt.rotation, points, symmetries)
                                       : rotation_loss(pred.rotation, gt.rotation, points);
  return ad::add(ad::scale(lr, cfg.alpha), position_loss(pred.site, gt.site));
}

Var total_loss(std::span<const StateVars> states, const PoseState& gt, const Matrix& points,
               std::span<const Mat3> symmetries, const LossConfig& cfg) {
  if (states.size() != static_cast<std::size_t>(cfg.n_refiners) + 1) {
    throw LengthMismatch("expected " + std::to_string(cfg.n_refiners + 1) + " states, got " +
                         std::to_string(states.size()));
  }
  Var total = ad::scale(step_loss(states[0], gt, points, symmetries, cfg), cfg.lambda);
  for (std::size_t i = 1; i < states.size(); ++i) {
    total = ad::add(total, ad::scale(step_loss(states[i], gt, points, symmetries, cfg),
                                     1.0 - cfg.lambda));
  }
  return total;
}

}  // namespace graph

}  // namespace oskf
