#pragma once

// Synthetic scenes with known pose. The feature pyramid is rasterised
// analytically from the posed model (object coordinates + inverse depth),
// standing in for a trained backbone.

#include <cstdint>
#include <filesystem>
#include <random>
#include <utility>

#include "oskf/geometry.hpp"
#include "oskf/keypoints.hpp"
#include "oskf/pyramid.hpp"

namespace oskf {

using Rng = std::mt19937_64;

/// Image region and depth band in which object centres are drawn.
struct Frustum {
  CameraIntrinsics k;
  double image_width = 640.0;
  double image_height = 480.0;
  double margin_px = 60.0;  ///< keep centres this far inside the image
  double depth_min = 0.5;
  double depth_max = 1.0;
};

struct PyramidConfig {
  int crop_size = 128;
  int levels = 4;
  int channels = 16;
  double depth_tolerance = 0.1;  ///< z-buffer slack, fraction of the model diameter
  bool smooth = true;            ///< separable [1/4, 1/2, 1/4] pass after splatting
  std::uint64_t mixing_seed = 0x05c3f00d;
};

struct DziConfig {
  double shift_frac = 0.25;
  double scale_min = 0.8;
  double scale_max = 1.25;
};

struct SynthConfig {
  Frustum frustum;
  PyramidConfig pyramid;
  DziConfig dzi;
  double enlarge = 1.2;
  bool perturb = true;        ///< apply DZI to the crop
  int max_crop_attempts = 100;
};

struct SynthScene {
  ObjectModel model;
  Pose gt_pose;
  CropFrame crop;
  CameraIntrinsics k;
  FeaturePyramid pyramid;
  std::uint64_t rng_seed = 0;
};

/// Uniform rotation (Shoemake quaternion sampling) and a centre uniform in
/// the frustum volume (pixel uniform in the image, depth density ~ z^2).
Pose random_pose(Rng& rng, const Frustum& frustum);

/// Tight square crop around the projected model, before enlargement.
CropFrame detection_crop(const ObjectModel& model, const Pose& pose, const CameraIntrinsics& k,
                         double s_image = 640.0);

/// Dynamic zoom-in: centre shifted by U(-f, f) * s_bbox per axis, size scaled
/// by U(scale_min, scale_max).
CropFrame dzi_perturb(const CropFrame& crop, Rng& rng, const DziConfig& cfg = {});

/// Scales the crop size by `factor` about its centre.
CropFrame enlarge_bbox(const CropFrame& crop, double factor = 1.2);

/// True when every projected model point lies within 1.5x the crop extent.
bool crop_contains_projection(const ObjectModel& model, const Pose& pose, const CropFrame& crop,
                              const CameraIntrinsics& k);

FeaturePyramid render_feature_pyramid(const ObjectModel& model, const Pose& pose,
                                      const CropFrame& crop, const CameraIntrinsics& k,
                                      const PyramidConfig& cfg);

/// Deterministic function of (model, config, seed).
SynthScene make_scene(const ObjectModel& model, const SynthConfig& cfg, std::uint64_t seed);

/// Asymmetric lumpy ellipsoid (about 13 cm across) sampled at n surface points.
ObjectModel synthetic_model(std::size_t n_points = 512);

/// Writes `<stem>.pyr` (pyramid format) and `<stem>.json` (gt pose, crop,
/// intrinsics, seed). Returns both paths.
std::pair<std::filesystem::path, std::filesystem::path> write_scene(
    const std::filesystem::path& stem, const SynthScene& scene);

}  // namespace oskf
