#include "oskf/synth.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "json_convert.hpp"
#include "oskf/error.hpp"

namespace oskf {

namespace {

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// [1/4, 1/2, 1/4] along x then y, zero padded.
void smooth_map(FeatureMap& map) {
  const int h = map.height(), w = map.width(), c = map.channels();
  FeatureMap tmp(h, w, c, map.stride_x(), map.stride_y());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double v = 0.5 * map.at(y, x, ch);
        if (x > 0) v += 0.25 * map.at(y, x - 1, ch);
        if (x + 1 < w) v += 0.25 * map.at(y, x + 1, ch);
        tmp.at(y, x, ch) = v;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double v = 0.5 * tmp.at(y, x, ch);
        if (y > 0) v += 0.25 * tmp.at(y - 1, x, ch);
        if (y + 1 < h) v += 0.25 * tmp.at(y + 1, x, ch);
        map.at(y, x, ch) = v;
      }
    }
  }
}

}  // namespace

Pose random_pose(Rng& rng, const Frustum& frustum) {
  frustum.k.validate();
  if (!(frustum.depth_min > 0.0 && frustum.depth_max >= frustum.depth_min)) {
    throw InputError("depth range must satisfy 0 < min <= max");
  }
  const double u_lo = frustum.margin_px, u_hi = frustum.image_width - frustum.margin_px;
  const double v_lo = frustum.margin_px, v_hi = frustum.image_height - frustum.margin_px;
  if (!(u_hi > u_lo && v_hi > v_lo)) throw InputError("frustum margin leaves no image area");

  const double u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  const double u3 = uniform(rng, 0.0, 1.0);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double two_pi = 2.0 * std::numbers::pi;
  const Eigen::Quaterniond q(b * std::cos(two_pi * u3), a * std::sin(two_pi * u2),
                             a * std::cos(two_pi * u2), b * std::sin(two_pi * u3));

  // Pixel uniform over the image rectangle and depth with density ~ z^2
  // gives a centre uniform in the frustum volume.
  const double px = uniform(rng, u_lo, u_hi);
  const double py = uniform(rng, v_lo, v_hi);
  const double z3 = uniform(rng, std::pow(frustum.depth_min, 3), std::pow(frustum.depth_max, 3));

  Pose pose;
  pose.rotation = q.normalized().toRotationMatrix();
  pose.translation = back_project(Vec2(px, py), std::cbrt(z3), frustum.k);
  return pose;
}

CropFrame detection_crop(const ObjectModel& model, const Pose& pose, const CameraIntrinsics& k,
                         double s_image) {
  if (model.points.empty()) throw EmptyModel("cannot frame an empty model");
  const std::vector<Vec2> px = project_keypoints(model.points, pose, k);
  Vec2 lo = px[0], hi = px[0];
  for (const Vec2& p : px) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double size = std::max({hi.x() - lo.x(), hi.y() - lo.y(), 1.0});
  return CropFrame::square(0.5 * (lo + hi), size, s_image);
}

CropFrame dzi_perturb(const CropFrame& crop, Rng& rng, const DziConfig& cfg) {
  crop.validate();
  if (!(cfg.shift_frac >= 0.0) || !(cfg.scale_min > 0.0) || !(cfg.scale_max >= cfg.scale_min)) {
    throw InputError("DZI ranges must satisfy shift >= 0 and 0 < scale_min <= scale_max");
  }
  const double s = crop.s_bbox();
  CropFrame out = crop;
  const double dx = cfg.shift_frac > 0.0 ? uniform(rng, -cfg.shift_frac, cfg.shift_frac) : 0.0;
  const double dy = cfg.shift_frac > 0.0 ? uniform(rng, -cfg.shift_frac, cfg.shift_frac) : 0.0;
  const double scale =
      cfg.scale_max > cfg.scale_min ? uniform(rng, cfg.scale_min, cfg.scale_max) : cfg.scale_min;
  out.center += Vec2(dx * s, dy * s);
  out.width = crop.width * scale;
  out.height = crop.height * scale;
  out.validate();
  return out;
}

CropFrame enlarge_bbox(const CropFrame& crop, double factor) {
  crop.validate();
  if (!(factor > 0.0)) throw InputError("enlargement factor must be positive");
  CropFrame out = crop;
  out.width *= factor;
  out.height *= factor;
  return out;
}

bool crop_contains_projection(const ObjectModel& model, const Pose& pose, const CropFrame& crop,
                              const CameraIntrinsics& k) {
  const double half = 0.75 * crop.s_bbox();
  for (const Vec2& p : project_keypoints(model.points, pose, k)) {
    if ((p - crop.center).cwiseAbs().maxCoeff() > half) return false;
  }
  return true;
}

FeaturePyramid render_feature_pyramid(const ObjectModel& model, const Pose& pose,
                                      const CropFrame& crop, const CameraIntrinsics& k,
                                      const PyramidConfig& cfg) {
  if (model.points.empty()) throw EmptyModel("cannot render an empty model");
  if (cfg.channels < 4) throw BadWidth("synthetic pyramids need at least 4 channels");
  if (!(model.diameter > 0.0)) throw InputError("model diameter must be positive");
  crop.validate();
  FeaturePyramid pyramid = FeaturePyramid::standard_layout(cfg.levels, cfg.channels, cfg.crop_size);

  const std::size_t n = model.points.size();
  std::vector<Vec3> cam(n);
  std::vector<Vec2> crop_px(n);
  for (std::size_t i = 0; i < n; ++i) {
    cam[i] = pose.rotation * model.points[i] + pose.translation;
    crop_px[i] = image_to_crop(project(cam[i], k), crop, cfg.crop_size);
  }

  Rng mix_rng(cfg.mixing_seed);
  Eigen::MatrixXd mixing(cfg.channels - 4, 4);
  for (Eigen::Index r = 0; r < mixing.rows(); ++r) {
    for (int c = 0; c < 4; ++c) mixing(r, c) = uniform(mix_rng, -1.0, 1.0);
  }

  const double slack = cfg.depth_tolerance * model.diameter;
  for (FeatureMap& map : pyramid.levels) {
    const int h = map.height(), w = map.width();
    std::vector<int> cell(n, -1);
    std::vector<double> zmin(static_cast<std::size_t>(h) * w,
                             std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
      const double gx = std::floor(crop_px[i].x() / map.stride_x());
      const double gy = std::floor(crop_px[i].y() / map.stride_y());
      if (gx < 0.0 || gy < 0.0 || gx >= w || gy >= h) continue;
      cell[i] = static_cast<int>(gy) * w + static_cast<int>(gx);
      zmin[cell[i]] = std::min(zmin[cell[i]], cam[i].z());
    }
    std::vector<int> hits(zmin.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (cell[i] < 0 || cam[i].z() > zmin[cell[i]] + slack) continue;
      double* f = map.pixel(cell[i] / w, cell[i] % w);
      const Vec3 obj = model.points[i] / model.diameter;
      f[0] += obj.x();
      f[1] += obj.y();
      f[2] += obj.z();
      f[3] += 1.0 / cam[i].z();
      ++hits[cell[i]];
    }
    for (std::size_t c = 0; c < hits.size(); ++c) {
      if (hits[c] < 2) continue;
      double* f = map.pixel(static_cast<int>(c) / w, static_cast<int>(c) % w);
      for (int ch = 0; ch < 4; ++ch) f[ch] /= hits[c];
    }
    if (cfg.smooth) smooth_map(map);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double* f = map.pixel(y, x);
        for (Eigen::Index r = 0; r < mixing.rows(); ++r) {
          double v = 0.0;
          for (int c = 0; c < 4; ++c) v += mixing(r, c) * f[c];
          f[4 + r] = v;
        }
      }
    }
  }
  return pyramid;
}

SynthScene make_scene(const ObjectModel& model, const SynthConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  SynthScene scene;
  scene.model = model;
  scene.k = cfg.frustum.k;
  scene.rng_seed = seed;
  const double s_image = std::max(cfg.frustum.image_width, cfg.frustum.image_height);
  const double near = kDefaultTolerances.near_plane;
  for (;;) {
    scene.gt_pose = random_pose(rng, cfg.frustum);
    bool in_front = true;
    for (const Vec3& x : model.points) {
      if ((scene.gt_pose.rotation * x + scene.gt_pose.translation).z() <= near) in_front = false;
    }
    if (in_front) break;
  }
  const CropFrame base =
      enlarge_bbox(detection_crop(model, scene.gt_pose, scene.k, s_image), cfg.enlarge);
  scene.crop = base;
  if (cfg.perturb) {
    for (int attempt = 0; attempt < cfg.max_crop_attempts; ++attempt) {
      const CropFrame c = dzi_perturb(base, rng, cfg.dzi);
      if (crop_contains_projection(model, scene.gt_pose, c, scene.k)) {
        scene.crop = c;
        break;
      }
    }
  }
  scene.pyramid = render_feature_pyramid(model, scene.gt_pose, scene.crop, scene.k, cfg.pyramid);
  return scene;
}

ObjectModel synthetic_model(std::size_t n_points) {
  if (n_points < 2) throw TooFewPoints("synthetic model needs at least 2 points");
  const Vec3 axes(0.06, 0.045, 0.03);
  const Vec3 nose = Vec3(0.8, 0.3, 0.5).normalized();
  const Vec3 fin = Vec3(-0.2, 0.9, -0.4).normalized();
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> pts;
  pts.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n_points);
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = golden * static_cast<double>(i);
    const Vec3 d(r * std::cos(phi), y, r * std::sin(phi));
    const double bump = 1.0 + 0.35 * std::pow(std::max(0.0, d.dot(nose)), 3) +
                        0.15 * std::pow(std::max(0.0, d.dot(fin)), 2);
    pts.push_back(d.cwiseProduct(axes) * bump);
  }
  return ObjectModel::from_points(std::move(pts));
}

std::pair<std::filesystem::path, std::filesystem::path> write_scene(
    const std::filesystem::path& stem, const SynthScene& scene) {
  std::filesystem::path pyr = stem;
  pyr += ".pyr";
  std::filesystem::path side = stem;
  side += ".json";
  write_pyramid(pyr, scene.pyramid);
  nlohmann::json j;
  j["seed"] = scene.rng_seed;
  j["gt_pose"] = detail::pose_json(scene.gt_pose);
  j["crop"] = {{"center", {scene.crop.center.x(), scene.crop.center.y()}},
               {"width", scene.crop.width},
               {"height", scene.crop.height},
               {"s_image", scene.crop.s_image}};
  j["intrinsics"] = detail::intrinsics_json(scene.k);
  j["pyramid"] = pyr.filename().string();
  std::ofstream out(side);
  if (!out) throw InputError("cannot write " + side.string());
  out << j.dump(2) << '\n';
  return {pyr, side};
}

}  // namespace oskf
