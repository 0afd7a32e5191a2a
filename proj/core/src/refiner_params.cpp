#include "oskf/refiner_params.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "oskf/error.hpp"

namespace oskf {

void RefinerConfig::validate() const {
  if (d_model <= 0 || heads <= 0 || d_model % heads != 0) {
    throw InputError("d_model must be a positive multiple of heads");
  }
  if (d_model % 4 != 0) throw BadWidth("d_model must be divisible by 4");
  if (points < 1 || levels < 1 || channels < 1 || keypoints < 1 || steps < 0) {
    throw InputError("refiner config counts must be positive");
  }
  if (!(layer_norm_eps > 0.0)) throw InputError("layer_norm_eps must be positive");
}

namespace {

AttentionParams zero_attention(int d) {
  AttentionParams a;
  for (Matrix* w : {&a.wq, &a.wk, &a.wv, &a.wo}) *w = Matrix::Zero(d, d);
  for (Matrix* b : {&a.bq, &a.bk, &a.bv, &a.bo, &a.ln_bias}) *b = Matrix::Zero(1, d);
  a.ln_gain = Matrix::Ones(1, d);
  return a;
}

MlpHead zero_head(int in, int hidden) {
  return {Matrix::Zero(in, hidden), Matrix::Zero(1, hidden), Matrix::Zero(hidden, 9),
          Matrix::Zero(1, 9)};
}

}  // namespace

RefinerParams shaped_params(const RefinerConfig& c) {
  c.validate();
  const int d = c.d_model;
  const int slots = c.heads * c.levels * c.points;
  RefinerParams p;
  p.coarse_head = zero_head(c.channels, c.hidden_width());
  p.initial_query = Matrix::Zero(c.keypoints, d);
  const int n_blocks = c.share_step_params ? std::min(c.steps, 1) : c.steps;
  for (int i = 0; i < n_blocks; ++i) {
    StepParams s;
    s.input_w = Matrix::Zero(c.levels * c.channels, d);
    s.input_b = Matrix::Zero(1, d);
    s.self_attn = zero_attention(d);
    s.post_attn = zero_attention(d);
    DeformableParams& df = s.deform;
    df.offset_w = Matrix::Zero(d, slots * 2);
    df.offset_b = Matrix::Zero(1, slots * 2);
    df.attn_w = Matrix::Zero(d, slots);
    df.attn_b = Matrix::Zero(1, slots);
    df.value_w = Matrix::Zero(c.channels, d);
    df.out_w = Matrix::Zero(d, d);
    df.out_b = Matrix::Zero(1, d);
    df.ln_gain = Matrix::Ones(1, d);
    df.ln_bias = Matrix::Zero(1, d);
    s.pose_head = zero_head(d, c.hidden_width());
    p.steps.push_back(std::move(s));
  }
  return p;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

RefinerParams init_refiner_params(const RefinerConfig& config, std::uint64_t seed) {
  RefinerParams p = shaped_params(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  p.visit([&](const std::string& name, Matrix& m) {
    if (ends_with(name, "ln_gain")) return;  // stays at one
    const bool is_bias = m.rows() == 1 && name != "initial_query";
    if (is_bias) return;
    if (name.find("pose_head.w2") != std::string::npos) return;  // identity at init
    double sigma = 1.0 / std::sqrt(static_cast<double>(m.rows()));
    if (name == "initial_query") sigma = 1.0;
    // Small sampling offsets keep the first samples near the keypoints.
    if (ends_with(name, "deform.offset_w")) sigma *= 0.01;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sigma * normal(rng);
  });
  p.coarse_head.b2(0, 0) = 1.0;
  p.coarse_head.b2(0, 4) = 1.0;
  return p;
}

RefinerParams zero_like(const RefinerParams& params) {
  RefinerParams z = params;
  z.visit([](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

void zero_pose_heads(RefinerParams& params) {
  for (StepParams& s : params.steps) {
    s.pose_head.w1.setZero();
    s.pose_head.b1.setZero();
    s.pose_head.w2.setZero();
    s.pose_head.b2.setZero();
  }
}

void set_coarse_depth_prior(RefinerParams& params, double gamma_z) {
  if (!(gamma_z > 0.0)) throw InputError("depth prior must be positive");
  // inverse softplus
  params.coarse_head.b2(0, 8) = gamma_z > 30.0 ? gamma_z : std::log(std::expm1(gamma_z));
}

void validate_params(const RefinerParams& params, const RefinerConfig& config) {
  const RefinerParams expected = shaped_params(config);
  if (expected.steps.size() != params.steps.size()) {
    throw ShapeMismatch("expected " + std::to_string(expected.steps.size()) +
                        " refinement blocks, got " + std::to_string(params.steps.size()));
  }
  std::vector<std::pair<std::string, const Matrix*>> want;
  expected.visit([&](const std::string& n, const Matrix& m) { want.emplace_back(n, &m); });
  std::size_t i = 0;
  params.visit([&](const std::string& n, const Matrix& m) {
    const Matrix& w = *want[i++].second;
    if (m.rows() != w.rows() || m.cols() != w.cols()) {
      throw ShapeMismatch(n + ": expected " + std::to_string(w.rows()) + "x" +
                          std::to_string(w.cols()) + ", got " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()));
    }
    if (!m.allFinite()) throw InputError(n + " contains non-finite values");
  });
}

std::size_t parameter_count(const RefinerParams& params) {
  std::size_t n = 0;
  params.visit([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

RefinerVars bind_params(ad::Tape& tape, const RefinerParams& params, bool trainable) {
  RefinerVars vars;
  vars.steps.resize(params.steps.size());
  std::vector<const Matrix*> src;
  params.visit([&](const std::string&, const Matrix& m) { src.push_back(&m); });
  std::size_t i = 0;
  vars.visit([&](const std::string&, ad::Var& v) {
    v = trainable ? tape.variable(*src[i]) : tape.constant(*src[i]);
    ++i;
  });
  return vars;
}

RefinerParams collect_gradients(const RefinerVars& vars) {
  RefinerParams grads;
  grads.steps.resize(vars.steps.size());
  std::vector<const ad::Var*> src;
  vars.visit([&](const std::string&, const ad::Var& v) { src.push_back(&v); });
  std::size_t i = 0;
  grads.visit([&](const std::string&, Matrix& m) { m = src[i++]->grad(); });
  return grads;
}

void axpy(RefinerParams& params, double alpha, const RefinerParams& delta) {
  std::vector<const Matrix*> d;
  delta.visit([&](const std::string&, const Matrix& m) { d.push_back(&m); });
  std::size_t i = 0;
  params.visit([&](const std::string&, Matrix& m) { m += alpha * *d[i++]; });
}

double squared_norm(const RefinerParams& params) {
  double s = 0.0;
  params.visit([&](const std::string&, const Matrix& m) { s += m.squaredNorm(); });
  return s;
}

}  // namespace oskf
