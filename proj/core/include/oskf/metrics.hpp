#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "oskf/geometry.hpp"
#include "oskf/keypoints.hpp"

namespace oskf {

/// Mean distance between corresponding transformed model points.
double add_distance(const Pose& pred, const Pose& gt, std::span<const Vec3> points);

enum class AddsMethod {
  kAuto,        ///< brute force up to kAddsBruteForceLimit points, grid above
  kBruteForce,  ///< O(n^2)
  kGrid,        ///< uniform-grid nearest neighbour, exact
};

inline constexpr std::size_t kAddsBruteForceLimit = 5000;

/// Mean over predicted points of the distance to the closest ground-truth
/// point. Every method returns the same value bit for bit.
double adds_distance(const Pose& pred, const Pose& gt, std::span<const Vec3> points,
                     AddsMethod method = AddsMethod::kAuto);

/// Fraction of distances strictly below threshold_frac * diameter.
double add_s_accuracy(std::span<const double> distances, double diameter,
                      double threshold_frac = 0.1);

/// Area under the accuracy-vs-threshold step curve on [0, max_threshold],
/// normalised by max_threshold.
double auc_add(std::span<const double> distances, double max_threshold = 0.10);

/// Geodesic angle in degrees, minimised over the symmetry set.
double rotation_error_deg(const Mat3& pred, const Mat3& gt, std::span<const Mat3> symmetries);

/// Rotation within n_deg (after symmetries) and translation within n_cm.
bool ndeg_ncm(const Pose& pred, const Pose& gt, std::span<const Mat3> symmetries, double n_deg,
              double n_cm);

/// One line of a predictions or ground-truth file.
struct InstanceRecord {
  int scene = 0;
  int im = 0;
  int obj = 0;
  Pose pose;
};

struct EvalModel {
  ObjectModel model;
  bool symmetric = false;  ///< use ADD-S (and the symmetry set) for this object
};

struct MetricRow {
  int obj = -1;  ///< -1 for the aggregate row
  std::size_t count = 0;
  double add_accuracy = 0.0;  ///< ADD(-S) < 0.1 d
  double auc_add_s = 0.0;     ///< 10 cm cap
  double acc_2deg2cm = 0.0;
  double acc_5deg5cm = 0.0;
  double mean_distance = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> objects;  ///< ascending object id
  MetricRow aggregate;             ///< instance-weighted mean of the rows
};

/// Joins predictions to ground truth on (scene, im, obj). Throws KeyMismatch
/// listing every unmatched instance, InputError for duplicate keys or
/// objects missing from `models`.
MetricReport evaluate(std::span<const InstanceRecord> predictions,
                      std::span<const InstanceRecord> ground_truth,
                      const std::map<int, EvalModel>& models);

}  // namespace oskf
