#pragma once

// Seeded random inputs shared by the checks and the unit tests.

#include <cmath>
#include <random>

#include "oskf/geometry.hpp"
#include "oskf/pyramid.hpp"
#include "oskf/refiner_params.hpp"
#include "oskf/synth.hpp"

namespace oskf::fixtures {

inline Vec3 normal3(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return {n(rng), n(rng), n(rng)};
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Mat3 random_rotation(Rng& rng) {
  Vec3 r1 = normal3(rng), r2 = normal3(rng);
  return recover_rotation({r1, r2});
}

inline double inf_norm(const Mat3& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

inline FeaturePyramid random_pyramid(Rng& rng, int levels, int channels, int crop) {
  FeaturePyramid p = FeaturePyramid::standard_layout(levels, channels, crop);
  std::normal_distribution<double> n(0.0, 1.0);
  for (FeatureMap& m : p.levels) {
    for (double& v : m.data()) v = n(rng);
  }
  return p;
}

inline AttentionParams random_attention(Rng& rng, int d) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionParams a;
  a.wq = random_matrix(rng, d, d, s);
  a.bq = random_matrix(rng, 1, d, 0.1);
  a.wk = random_matrix(rng, d, d, s);
  a.bk = random_matrix(rng, 1, d, 0.1);
  a.wv = random_matrix(rng, d, d, s);
  a.bv = random_matrix(rng, 1, d, 0.1);
  a.wo = random_matrix(rng, d, d, s);
  a.bo = random_matrix(rng, 1, d, 0.1);
  a.ln_gain = Matrix::Ones(1, d) + random_matrix(rng, 1, d, 0.1);
  a.ln_bias = random_matrix(rng, 1, d, 0.1);
  return a;
}

inline DeformableParams random_deformable(Rng& rng, const RefinerConfig& c) {
  const int d = c.d_model, slots = c.heads * c.levels * c.points;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  DeformableParams p;
  p.offset_w = random_matrix(rng, d, 2 * slots, 0.05);
  p.offset_b = random_matrix(rng, 1, 2 * slots, 0.05);
  p.attn_w = random_matrix(rng, d, slots, s);
  p.attn_b = random_matrix(rng, 1, slots, 0.1);
  p.value_w = random_matrix(rng, c.channels, d, 1.0 / std::sqrt(static_cast<double>(c.channels)));
  p.out_w = random_matrix(rng, d, d, s);
  p.out_b = random_matrix(rng, 1, d, 0.1);
  p.ln_gain = Matrix::Ones(1, d) + random_matrix(rng, 1, d, 0.1);
  p.ln_bias = random_matrix(rng, 1, d, 0.1);
  return p;
}


}  // namespace oskf::fixtures
