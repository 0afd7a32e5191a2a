#include "oskf/json_io.hpp"

#include <fstream>
#include <sstream>

#include "json_convert.hpp"
#include "oskf/error.hpp"
#include "oskf/ply.hpp"

namespace oskf {

namespace {

nlohmann::json parse_text(const std::string& text, const std::string& source) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 0, e.what());
  }
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

InstanceRecord record_from(const nlohmann::json& j) {
  InstanceRecord r;
  r.scene = j.at("scene").get<int>();
  r.im = j.at("im").get<int>();
  r.obj = j.at("obj").get<int>();
  const auto& rot = j.at("R");
  if (!rot.is_array() || rot.size() != 9) throw InputError("\"R\" must hold 9 numbers");
  r.pose.rotation = detail::mat3_from(rot);
  r.pose.translation = detail::vec3_from(j.at("t"));
  return r;
}

EvalModel model_from(const nlohmann::json& j, const std::filesystem::path& base) {
  std::filesystem::path ply = j.at("ply").get<std::string>();
  if (ply.is_relative()) ply = base / ply;
  std::vector<Mat3> syms;
  if (j.contains("symmetries")) {
    for (const auto& s : j.at("symmetries")) syms.push_back(detail::mat3_from(s));
  }
  EvalModel em;
  em.model = ObjectModel::from_points(read_ply_points(ply), std::move(syms));
  if (j.contains("diameter")) em.model.diameter = j.at("diameter").get<double>();
  if (!(em.model.diameter > 0.0)) throw InputError("model diameter must be positive");
  em.symmetric = j.value("symmetric", false);
  return em;
}

}  // namespace

std::string pose_to_json(const Pose& pose) { return detail::pose_json(pose).dump(); }

Pose pose_from_json(const std::string& text) {
  try {
    return detail::pose_from(parse_text(text, "<pose>"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("<pose>", 0, e.what());
  }
}

std::string intrinsics_to_json(const CameraIntrinsics& k) {
  return detail::intrinsics_json(k).dump();
}

CameraIntrinsics intrinsics_from_json(const std::string& text) {
  try {
    return detail::intrinsics_from(parse_text(text, "<intrinsics>"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("<intrinsics>", 0, e.what());
  }
}

std::string keypoints_to_json(const KeypointSet& keypoints) {
  nlohmann::json j = nlohmann::json::array();
  for (const Vec3& p : keypoints.keypoints) j.push_back({p.x(), p.y(), p.z()});
  return j.dump();
}

void write_keypoints(const std::filesystem::path& path, const KeypointSet& keypoints) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << keypoints_to_json(keypoints) << '\n';
}

std::vector<InstanceRecord> parse_records(std::istream& in, const std::string& source) {
  std::vector<InstanceRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const InputError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return out;
}

std::vector<InstanceRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_records(in, path.string());
}

void write_records(std::ostream& out, const std::vector<InstanceRecord>& records) {
  for (const InstanceRecord& r : records) {
    nlohmann::json j;
    j["scene"] = r.scene;
    j["im"] = r.im;
    j["obj"] = r.obj;
    nlohmann::json rot = nlohmann::json::array();
    for (int i = 0; i < 9; ++i) rot.push_back(r.pose.rotation(i / 3, i % 3));
    j["R"] = rot;
    j["t"] = {r.pose.translation.x(), r.pose.translation.y(), r.pose.translation.z()};
    out << j.dump() << '\n';
  }
}

void write_records(const std::filesystem::path& path, const std::vector<InstanceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  write_records(out, records);
}

std::map<int, EvalModel> read_models_manifest(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  const std::filesystem::path base = path.parent_path();
  std::vector<nlohmann::json> entries;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.is_array()) {
      entries.assign(j.begin(), j.end());
    } else {
      entries.push_back(j);
    }
  } catch (const nlohmann::json::parse_error&) {
    // JSON-lines fallback
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        entries.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string(), line_no, e.what());
      }
    }
  }
  std::map<int, EvalModel> models;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    try {
      const int obj = entries[i].at("obj").get<int>();
      if (!models.emplace(obj, model_from(entries[i], base)).second) {
        throw InputError("duplicate manifest entry for object " + std::to_string(obj));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), 0, "entry " + std::to_string(i) + ": " + e.what());
    }
  }
  return models;
}

std::string report_to_json(const MetricReport& report) {
  auto row_json = [](const MetricRow& r) {
    return nlohmann::json{{"obj", r.obj},
                          {"count", r.count},
                          {"add_accuracy", r.add_accuracy},
                          {"auc_add_s", r.auc_add_s},
                          {"acc_2deg2cm", r.acc_2deg2cm},
                          {"acc_5deg5cm", r.acc_5deg5cm},
                          {"mean_distance", r.mean_distance}};
  };
  nlohmann::json j;
  j["objects"] = nlohmann::json::array();
  for (const MetricRow& r : report.objects) j["objects"].push_back(row_json(r));
  j["aggregate"] = row_json(report.aggregate);
  return j.dump(2);
}

}  // namespace oskf
