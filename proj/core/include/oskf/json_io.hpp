#pragma once

// Text formats: pose / intrinsics objects, keypoint lists, JSON-lines
// instance records and the models manifest used by evaluation.

#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "oskf/geometry.hpp"
#include "oskf/keypoints.hpp"
#include "oskf/metrics.hpp"

namespace oskf {

/// {"R": [[r00,r01,r02],[..],[..]], "t": [x,y,z]}
std::string pose_to_json(const Pose& pose);
Pose pose_from_json(const std::string& text);

/// {"fx":..,"fy":..,"cx":..,"cy":..}
std::string intrinsics_to_json(const CameraIntrinsics& k);
CameraIntrinsics intrinsics_from_json(const std::string& text);

/// JSON list of [x, y, z].
std::string keypoints_to_json(const KeypointSet& keypoints);
void write_keypoints(const std::filesystem::path& path, const KeypointSet& keypoints);

/// One {"scene","im","obj","R":[9],"t":[3]} object per line; blank lines
/// are skipped. ParseError carries the offending line.
std::vector<InstanceRecord> parse_records(std::istream& in, const std::string& source);
std::vector<InstanceRecord> read_records(const std::filesystem::path& path);
void write_records(std::ostream& out, const std::vector<InstanceRecord>& records);
void write_records(const std::filesystem::path& path, const std::vector<InstanceRecord>& records);

/// Manifest: a JSON array (or JSON-lines) of
/// {"obj","ply","diameter","symmetric","symmetries":[[9],..]}. PLY paths are
/// resolved relative to the manifest. A missing diameter is computed.
std::map<int, EvalModel> read_models_manifest(const std::filesystem::path& path);

std::string report_to_json(const MetricReport& report);

}  // namespace oskf
