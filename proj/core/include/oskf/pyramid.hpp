#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "oskf/geometry.hpp"

namespace oskf {

/// Dense (height, width, channels) map, row-major and channel-last. The
/// strides give crop pixels per cell along x and y.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int height, int width, int channels, double stride_x, double stride_y);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  double stride_x() const { return stride_x_; }
  double stride_y() const { return stride_y_; }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }
  const double* pixel(int y, int x) const { return data_.data() + index(y, x, 0); }
  double* pixel(int y, int x) { return data_.data() + index(y, x, 0); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// Crop-pixel coordinates of the centre of cell (y, x).
  Vec2 cell_center(int y, int x) const { return {(x + 0.5) * stride_x_, (y + 0.5) * stride_y_}; }

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  double stride_x_ = 1.0;
  double stride_y_ = 1.0;
  std::vector<double> data_;
};

/// Multi-scale feature stack computed from a square crop of `crop_size`
/// pixels. Level l has stride crop_size / width_l.
struct FeaturePyramid {
  std::vector<FeatureMap> levels;
  double crop_size = 0.0;

  int num_levels() const { return static_cast<int>(levels.size()); }
  int channels() const { return levels.empty() ? 0 : levels.front().channels(); }
  void validate() const;

  /// Zero pyramid with levels at strides 4, 8, 16, ... of the crop.
  static FeaturePyramid standard_layout(int num_levels, int channels, int crop_size);
};

/// Bilinear footprint of a sample: four cell indices (-1 when outside the
/// map) with weights, plus the weight derivatives w.r.t. the crop-pixel
/// position.
struct BilinearTaps {
  std::array<int, 4> y{};
  std::array<int, 4> x{};
  std::array<bool, 4> inside{};
  std::array<double, 4> weight{};
  std::array<double, 4> dweight_dx{};
  std::array<double, 4> dweight_dy{};
};

BilinearTaps bilinear_taps(const FeatureMap& map, const Vec2& position_px);

/// Samples a map at a crop-pixel position. Cell centres sit at
/// (i + 0.5) * stride; taps outside the map read as zero.
Eigen::VectorXd bilinear_sample(const FeatureMap& map, const Vec2& position_px);

/// Per-keypoint, per-level features. Row k holds L blocks of C channels.
struct OskfSet {
  Eigen::MatrixXd features;
  std::vector<Vec2> positions;
  int num_levels = 0;
  int channels = 0;

  Eigen::VectorXd feature(int k, int level) const {
    return features.row(k).segment(level * channels, channels).transpose();
  }
};

OskfSet extract_oskf(const FeaturePyramid& pyramid, std::span<const Vec2> positions_px);

/// Header line of JSON {"L","C","s","dims"} followed by little-endian
/// float64 payload, level by level, row-major, channel-last.
void write_pyramid(const std::filesystem::path& path, const FeaturePyramid& pyramid);
FeaturePyramid read_pyramid(const std::filesystem::path& path);

}  // namespace oskf
