#include "oskf/checkpoint.hpp"

#include <fstream>
#include <json.hpp>
#include <vector>

#include "binary_io.hpp"
#include "oskf/error.hpp"

namespace oskf {

namespace {

constexpr const char* kFormat = "oskf-checkpoint";
constexpr int kVersion = 1;

nlohmann::json config_json(const RefinerConfig& c) {
  return {{"d_model", c.d_model},       {"heads", c.heads},
          {"points", c.points},         {"levels", c.levels},
          {"channels", c.channels},     {"keypoints", c.keypoints},
          {"steps", c.steps},           {"hidden", c.hidden},
          {"share_step_params", c.share_step_params},
          {"layer_norm_eps", c.layer_norm_eps}};
}

RefinerConfig config_from(const nlohmann::json& j) {
  RefinerConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.heads = j.at("heads").get<int>();
  c.points = j.at("points").get<int>();
  c.levels = j.at("levels").get<int>();
  c.channels = j.at("channels").get<int>();
  c.keypoints = j.at("keypoints").get<int>();
  c.steps = j.at("steps").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.share_step_params = j.at("share_step_params").get<bool>();
  c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  return c;
}

}  // namespace

void write_checkpoint(std::ostream& out, const RefinerConfig& config, const RefinerParams& params) {
  validate_params(params, config);
  nlohmann::json header;
  header["format"] = kFormat;
  header["version"] = kVersion;
  header["config"] = config_json(config);
  nlohmann::json table = nlohmann::json::array();
  params.visit([&](const std::string& name, const Matrix& m) {
    table.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}});
  });
  header["tensors"] = table;
  out << header.dump() << '\n';
  params.visit([&](const std::string&, const Matrix& m) {
    // Eigen is column-major; the file is row-major.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    detail::write_f64_le(out, std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())));
  });
}

void write_checkpoint(const std::filesystem::path& path, const RefinerConfig& config,
                      const RefinerParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  write_checkpoint(out, config, params);
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint read_checkpoint(std::istream& in, const std::string& source) {
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(detail::read_header_line(in, source));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 1, std::string("bad header: ") + e.what());
  }
  Checkpoint ck;
  std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> table;
  try {
    if (header.at("format").get<std::string>() != kFormat) {
      throw ParseError(source, 1, "not an oskf checkpoint");
    }
    if (header.at("version").get<int>() != kVersion) {
      throw ParseError(source, 1, "unsupported checkpoint version");
    }
    ck.config = config_from(header.at("config"));
    for (const auto& t : header.at("tensors")) {
      table.push_back({t.at("name").get<std::string>(),
                       {t.at("shape").at(0).get<Eigen::Index>(), t.at("shape").at(1).get<Eigen::Index>()}});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 1, std::string("bad header: ") + e.what());
  }
  try {
    ck.params = shaped_params(ck.config);
  } catch (const InputError& e) {
    throw ParseError(source, 1, std::string("bad config: ") + e.what());
  }

  std::size_t i = 0;
  ck.params.visit([&](const std::string& name, Matrix& m) {
    if (i >= table.size()) throw ParseError(source, 1, "tensor table is missing " + name);
    const auto& [tname, shape] = table[i++];
    if (tname != name || shape.first != m.rows() || shape.second != m.cols()) {
      throw ParseError(source, 1,
                       "tensor " + tname + " does not match the configured layout (expected " +
                           name + ")");
    }
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(m.rows(), m.cols());
    detail::read_f64_le(in, std::span<double>(rm.data(), static_cast<std::size_t>(rm.size())),
                        source);
    m = rm;
  });
  if (i != table.size()) throw ParseError(source, 1, "tensor table has extra entries");
  detail::expect_eof(in, source);
  try {
    validate_params(ck.params, ck.config);
  } catch (const InputError& e) {
    throw ParseError(source, 0, e.what());
  }
  return ck;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace oskf
