#include "oskf/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "oskf/error.hpp"

namespace oskf {

bool is_rotation(const Mat3& r, double tol) {
  const Mat3 residual = r.transpose() * r - Mat3::Identity();
  if (residual.cwiseAbs().maxCoeff() >= tol) return false;
  return std::abs(r.determinant() - 1.0) < tol;
}

bool is_valid_pose(const Pose& pose, double tol) {
  return is_rotation(pose.rotation, tol) && pose.translation.z() > 0.0 &&
         pose.translation.allFinite();
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(cx) || !std::isfinite(cy)) {
    throw InputError("camera intrinsics require fx > 0 and fy > 0");
  }
}

void CropFrame::validate() const {
  if (!(s_bbox() > 0.0) || !(s_image > 0.0) || !center.allFinite()) {
    throw InvalidCrop("crop requires s_bbox > 0 and s_image > 0");
  }
}

Mat3 recover_rotation(const Rotation6D& repr, const GeometryTolerances& tol) {
  const double n1 = repr.r1.norm();
  if (!(n1 > tol.degenerate)) throw DegenerateRotation("6D rotation has |r1| ~ 0");
  const Vec3 c1 = repr.r1 / n1;
  const Vec3 c3_raw = c1.cross(repr.r2);
  const double n3 = c3_raw.norm();
  // |c1 x r2| = |r1 x r2| / |r1|; test the scale-free quantity.
  if (!(n3 * n1 > tol.degenerate) || !(n3 > 0.0)) {
    throw DegenerateRotation("6D rotation has parallel r1 and r2");
  }
  const Vec3 c3 = c3_raw / n3;
  const Vec3 c2 = c3.cross(c1);
  Mat3 r;
  r.col(0) = c1;
  r.col(1) = c2;
  r.col(2) = c3;
  return r;
}

SiteTranslation site_encode(const Vec2& object_center, double depth, const CropFrame& crop) {
  crop.validate();
  const double s = crop.s_bbox();
  return {(object_center.x() - crop.center.x()) / s, (object_center.y() - crop.center.y()) / s,
          depth / crop.ratio()};
}

ObjectCenter site_decode(const SiteTranslation& site, const CropFrame& crop) {
  crop.validate();
  const double s = crop.s_bbox();
  return {Vec2(crop.center.x() + site.gamma_x * s, crop.center.y() + site.gamma_y * s),
          site.gamma_z * crop.ratio()};
}

Vec3 back_project(const Vec2& pixel, double depth, const CameraIntrinsics& k) {
  return depth * Vec3((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0);
}

Vec2 project(const Vec3& point_cam, const CameraIntrinsics& k, const GeometryTolerances& tol) {
  if (!(point_cam.z() > tol.near_plane)) throw BehindCamera(0, point_cam.z());
  return {k.fx * point_cam.x() / point_cam.z() + k.cx, k.fy * point_cam.y() / point_cam.z() + k.cy};
}

std::vector<Vec2> project_keypoints(std::span<const Vec3> keypoints, const Pose& pose,
                                    const CameraIntrinsics& k, const GeometryTolerances& tol) {
  std::vector<Vec2> out;
  out.reserve(keypoints.size());
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const Vec3 p = pose.rotation * keypoints[i] + pose.translation;
    if (!(p.z() > tol.near_plane)) throw BehindCamera(i, p.z());
    out.emplace_back(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
  }
  return out;
}

Mat3 view_rotation(const Vec3& t, const GeometryTolerances& tol) {
  const double n = t.norm();
  if (!(n > 0.0)) throw DegenerateDirection("view rotation of a zero translation");
  const Vec3 dir = t / n;
  const double c = dir.z();
  if (!(1.0 + c > tol.degenerate)) {
    throw DegenerateDirection("object ray is antiparallel to the optical axis");
  }
  // Rodrigues form for the rotation taking z onto dir: I + [v]x + [v]x^2 / (1 + c).
  const Vec3 v = Vec3::UnitZ().cross(dir);
  Mat3 skew;
  skew << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return Mat3::Identity() + skew + skew * skew / (1.0 + c);
}

Mat3 allo_to_ego(const Mat3& allocentric, const Vec3& t, const GeometryTolerances& tol) {
  return view_rotation(t, tol) * allocentric;
}

Mat3 ego_to_allo(const Mat3& egocentric, const Vec3& t, const GeometryTolerances& tol) {
  return view_rotation(t, tol).transpose() * egocentric;
}

PoseState apply_pose_offset(const PoseState& prev, const PoseOffset& offset,
                            const GeometryTolerances& tol) {
  PoseState next;
  next.rotation = recover_rotation(offset.delta_rotation, tol) * prev.rotation;
  next.site.gamma_x = prev.site.gamma_x + offset.delta_gamma.x();
  next.site.gamma_y = prev.site.gamma_y + offset.delta_gamma.y();
  next.site.gamma_z = prev.site.gamma_z * (1.0 + std::tanh(offset.delta_gamma.z()));
  // 1 + tanh(d) rounds to exactly 0 for d below about -19.
  if (!(next.site.gamma_z > 0.0)) next.site.gamma_z = std::numeric_limits<double>::denorm_min();
  return next;
}

Pose decode_state(const PoseState& state, const CropFrame& crop, const CameraIntrinsics& k) {
  const ObjectCenter c = site_decode(state.site, crop);
  return {state.rotation, back_project(c.center, c.depth, k)};
}

PoseState encode_pose(const Pose& pose, const CropFrame& crop, const CameraIntrinsics& k) {
  const Vec2 center = project(pose.translation, k);
  return {pose.rotation, site_encode(center, pose.translation.z(), crop)};
}

double rotation_angle_deg(const Mat3& a, const Mat3& b) {
  const double cos_angle = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(cos_angle) * 180.0 / std::numbers::pi;
}

Vec2 image_to_crop(const Vec2& pixel, const CropFrame& crop, double crop_size) {
  const double s = crop.s_bbox();
  const Vec2 origin = crop.center - Vec2::Constant(0.5 * s);
  return (pixel - origin) * (crop_size / s);
}

Vec2 crop_to_image(const Vec2& crop_px, const CropFrame& crop, double crop_size) {
  const double s = crop.s_bbox();
  const Vec2 origin = crop.center - Vec2::Constant(0.5 * s);
  return origin + crop_px * (s / crop_size);
}

}  // namespace oskf
