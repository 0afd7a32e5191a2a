#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

namespace oskf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Numerical thresholds shared by the geometry routines.
struct GeometryTolerances {
  double degenerate = 1e-8;  ///< minimum |r1| and |r1 x r2| for 6D recovery
  double near_plane = 1e-6;  ///< minimum depth (m) accepted by the projector
};

inline constexpr GeometryTolerances kDefaultTolerances{};

/// Rigid transform of an object into the camera frame.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3(0.0, 0.0, 1.0);
};

/// True when rotation is orthonormal with det +1 (within tol) and the
/// translation lies in front of the camera.
bool is_valid_pose(const Pose& pose, double tol = 1e-9);
bool is_rotation(const Mat3& r, double tol = 1e-9);

/// Continuous 6D rotation parameterization: the first two (unnormalized)
/// columns of a rotation matrix.
struct Rotation6D {
  Vec3 r1 = Vec3::UnitX();
  Vec3 r2 = Vec3::UnitY();

  static Rotation6D identity() { return {}; }
  static Rotation6D from_matrix(const Mat3& r) { return {r.col(0), r.col(1)}; }
};

struct CameraIntrinsics {
  double fx = 572.4114;
  double fy = 573.5704;
  double cx = 325.2611;
  double cy = 242.0490;

  void validate() const;
};

/// Square crop around a detection. s_bbox = max(width, height); the ratio
/// s_bbox / s_image converts depth into the crop-relative encoding.
struct CropFrame {
  Vec2 center = Vec2::Zero();
  double width = 1.0;
  double height = 1.0;
  double s_image = 640.0;

  double s_bbox() const { return width > height ? width : height; }
  double ratio() const { return s_bbox() / s_image; }
  void validate() const;

  static CropFrame square(const Vec2& center, double size, double s_image = 640.0) {
    return {center, size, size, s_image};
  }
};

/// Scale-invariant translation: object centre offset in crop units and
/// depth divided by the crop ratio.
struct SiteTranslation {
  double gamma_x = 0.0;
  double gamma_y = 0.0;
  double gamma_z = 1.0;

  Vec3 as_vector() const { return {gamma_x, gamma_y, gamma_z}; }
  static SiteTranslation from_vector(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
};

/// Raw offset emitted by a pose head.
struct PoseOffset {
  Rotation6D delta_rotation;
  Vec3 delta_gamma = Vec3::Zero();

  static PoseOffset identity() { return {}; }
};

/// Internal refinement state: egocentric rotation and the site encoding of
/// the translation relative to the current crop.
struct PoseState {
  Mat3 rotation = Mat3::Identity();
  SiteTranslation site;
};

struct ObjectCenter {
  Vec2 center;
  double depth;
};

/// Gram-Schmidt recovery of a rotation from its 6D representation.
/// Throws DegenerateRotation when |r1| or |r1 x r2| is below tol.degenerate.
Mat3 recover_rotation(const Rotation6D& repr, const GeometryTolerances& tol = kDefaultTolerances);

SiteTranslation site_encode(const Vec2& object_center, double depth, const CropFrame& crop);
ObjectCenter site_decode(const SiteTranslation& site, const CropFrame& crop);

Vec3 back_project(const Vec2& pixel, double depth, const CameraIntrinsics& k);

/// Pinhole projection; throws BehindCamera when z <= tol.near_plane.
Vec2 project(const Vec3& point_cam, const CameraIntrinsics& k,
             const GeometryTolerances& tol = kDefaultTolerances);

/// project(R * S_k + t) for every keypoint; BehindCamera carries the index.
std::vector<Vec2> project_keypoints(std::span<const Vec3> keypoints, const Pose& pose,
                                    const CameraIntrinsics& k,
                                    const GeometryTolerances& tol = kDefaultTolerances);

/// Minimal rotation taking the optical axis (0,0,1) onto t / |t|.
Mat3 view_rotation(const Vec3& t, const GeometryTolerances& tol = kDefaultTolerances);
Mat3 allo_to_ego(const Mat3& allocentric, const Vec3& t,
                 const GeometryTolerances& tol = kDefaultTolerances);
Mat3 ego_to_allo(const Mat3& egocentric, const Vec3& t,
                 const GeometryTolerances& tol = kDefaultTolerances);

/// R' = recover(dR) * R, gamma_xy += d_xy, gamma_z *= 1 + tanh(d_z).
PoseState apply_pose_offset(const PoseState& prev, const PoseOffset& offset,
                            const GeometryTolerances& tol = kDefaultTolerances);

/// Metric pose of a refinement state under a crop and camera.
Pose decode_state(const PoseState& state, const CropFrame& crop, const CameraIntrinsics& k);
/// Inverse of decode_state: projects the translation to get the object centre.
PoseState encode_pose(const Pose& pose, const CropFrame& crop, const CameraIntrinsics& k);

/// Geodesic distance between two rotations, in degrees.
double rotation_angle_deg(const Mat3& a, const Mat3& b);

/// Image pixel -> crop pixel for a crop resampled to crop_size pixels.
Vec2 image_to_crop(const Vec2& pixel, const CropFrame& crop, double crop_size);
Vec2 crop_to_image(const Vec2& crop_px, const CropFrame& crop, double crop_size);

}  // namespace oskf
