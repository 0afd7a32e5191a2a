#include "oskf/pyramid.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "binary_io.hpp"
#include "oskf/error.hpp"

namespace oskf {

FeatureMap::FeatureMap(int height, int width, int channels, double stride_x, double stride_y)
    : height_(height),
      width_(width),
      channels_(channels),
      stride_x_(stride_x),
      stride_y_(stride_y),
      data_(static_cast<std::size_t>(height) * width * channels, 0.0) {
  if (height <= 0 || width <= 0 || channels <= 0) throw ShapeMismatch("feature map dims must be positive");
  if (!(stride_x > 0.0) || !(stride_y > 0.0)) throw ShapeMismatch("feature map stride must be positive");
}

void FeaturePyramid::validate() const {
  if (levels.empty()) throw ShapeMismatch("pyramid has no levels");
  if (!(crop_size > 0.0)) throw ShapeMismatch("pyramid crop size must be positive");
  for (const FeatureMap& m : levels) {
    if (m.channels() != channels()) throw ShapeMismatch("pyramid levels disagree on channel count");
  }
}

FeaturePyramid FeaturePyramid::standard_layout(int num_levels, int channels, int crop_size) {
  FeaturePyramid p;
  p.crop_size = crop_size;
  int stride = 4;
  for (int l = 0; l < num_levels; ++l, stride *= 2) {
    const int n = crop_size / stride;
    if (n < 1) throw ShapeMismatch("crop too small for " + std::to_string(num_levels) + " levels");
    p.levels.emplace_back(n, n, channels, static_cast<double>(crop_size) / n,
                          static_cast<double>(crop_size) / n);
  }
  return p;
}

BilinearTaps bilinear_taps(const FeatureMap& map, const Vec2& position_px) {
  BilinearTaps taps;
  const double gx = position_px.x() / map.stride_x() - 0.5;
  const double gy = position_px.y() / map.stride_y() - 0.5;
  // Far outside: every tap is padding. Also keeps floor() inside int range.
  if (!(gx > -2.0 && gx < map.width() + 1.0 && gy > -2.0 && gy < map.height() + 1.0)) {
    taps.inside.fill(false);
    return taps;
  }
  const double fx0 = std::floor(gx);
  const double fy0 = std::floor(gy);
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double ax = gx - fx0;
  const double ay = gy - fy0;
  const double sx = 1.0 / map.stride_x();
  const double sy = 1.0 / map.stride_y();

  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  const double w[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
  const double dgx[4] = {-(1 - ay), (1 - ay), -ay, ay};
  const double dgy[4] = {-(1 - ax), -ax, (1 - ax), ax};
  for (int i = 0; i < 4; ++i) {
    taps.x[i] = xs[i];
    taps.y[i] = ys[i];
    taps.inside[i] = xs[i] >= 0 && xs[i] < map.width() && ys[i] >= 0 && ys[i] < map.height();
    taps.weight[i] = w[i];
    taps.dweight_dx[i] = dgx[i] * sx;
    taps.dweight_dy[i] = dgy[i] * sy;
  }
  return taps;
}

Eigen::VectorXd bilinear_sample(const FeatureMap& map, const Vec2& position_px) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(map.channels());
  const BilinearTaps taps = bilinear_taps(map, position_px);
  for (int i = 0; i < 4; ++i) {
    if (!taps.inside[i]) continue;
    const double* f = map.pixel(taps.y[i], taps.x[i]);
    for (int c = 0; c < map.channels(); ++c) out[c] += taps.weight[i] * f[c];
  }
  return out;
}

OskfSet extract_oskf(const FeaturePyramid& pyramid, std::span<const Vec2> positions_px) {
  pyramid.validate();
  OskfSet out;
  out.num_levels = pyramid.num_levels();
  out.channels = pyramid.channels();
  out.positions.assign(positions_px.begin(), positions_px.end());
  const int k = static_cast<int>(positions_px.size());
  out.features.resize(k, out.num_levels * out.channels);
  for (int i = 0; i < k; ++i) {
    for (int l = 0; l < out.num_levels; ++l) {
      out.features.row(i).segment(l * out.channels, out.channels) =
          bilinear_sample(pyramid.levels[l], positions_px[i]).transpose();
    }
  }
  return out;
}

void write_pyramid(const std::filesystem::path& path, const FeaturePyramid& pyramid) {
  pyramid.validate();
  nlohmann::json header;
  header["L"] = pyramid.num_levels();
  header["C"] = pyramid.channels();
  header["s"] = pyramid.crop_size;
  nlohmann::json dims = nlohmann::json::array();
  for (const FeatureMap& m : pyramid.levels) dims.push_back({m.height(), m.width()});
  header["dims"] = dims;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << header.dump() << '\n';
  for (const FeatureMap& m : pyramid.levels) detail::write_f64_le(out, m.data());
  if (!out) throw Error("write failed for " + path.string());
}

FeaturePyramid read_pyramid(const std::filesystem::path& path) {
  const std::string source = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(source, 0, "cannot open file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(detail::read_header_line(in, source));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 1, std::string("bad header: ") + e.what());
  }
  FeaturePyramid p;
  try {
    const int levels = header.at("L").get<int>();
    const int channels = header.at("C").get<int>();
    p.crop_size = header.at("s").get<double>();
    const auto& dims = header.at("dims");
    if (levels < 1 || channels < 1 || static_cast<int>(dims.size()) != levels) {
      throw ParseError(source, 1, "header L/C/dims are inconsistent");
    }
    for (const auto& d : dims) {
      const int h = d.at(0).get<int>();
      const int w = d.at(1).get<int>();
      if (h < 1 || w < 1) throw ParseError(source, 1, "level dims must be positive");
      p.levels.emplace_back(h, w, channels, p.crop_size / w, p.crop_size / h);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 1, std::string("bad header: ") + e.what());
  }
  for (FeatureMap& m : p.levels) detail::read_f64_le(in, m.data(), source);
  detail::expect_eof(in, source);
  return p;
}

}  // namespace oskf
