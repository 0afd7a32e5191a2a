#pragma once

// nlohmann::json conversions for the library types. Private: the public
// headers stay free of the JSON dependency.

#include <json.hpp>
#include <string>

#include "oskf/error.hpp"
#include "oskf/geometry.hpp"

namespace oskf::detail {

inline nlohmann::json mat3_rows(const Mat3& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) rows.push_back({r(i, 0), r(i, 1), r(i, 2)});
  return rows;
}

/// Accepts a 3x3 nested array or 9 numbers, row-major.
inline Mat3 mat3_from(const nlohmann::json& j) {
  Mat3 r;
  if (j.is_array() && j.size() == 3 && j[0].is_array()) {
    for (int i = 0; i < 3; ++i) {
      if (!j[i].is_array() || j[i].size() != 3) throw InputError("rotation rows must have 3 entries");
      for (int c = 0; c < 3; ++c) r(i, c) = j[i][c].get<double>();
    }
  } else if (j.is_array() && j.size() == 9) {
    for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = j[i].get<double>();
  } else {
    throw InputError("rotation must be 3x3 or 9 numbers");
  }
  return r;
}

inline Vec3 vec3_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw InputError("expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json pose_json(const Pose& p) {
  return {{"R", mat3_rows(p.rotation)},
          {"t", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

inline Pose pose_from(const nlohmann::json& j) {
  Pose p;
  p.rotation = mat3_from(j.at("R"));
  p.translation = vec3_from(j.at("t"));
  return p;
}

inline nlohmann::json intrinsics_json(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
}

inline CameraIntrinsics intrinsics_from(const nlohmann::json& j) {
  CameraIntrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.validate();
  return k;
}

}  // namespace oskf::detail
