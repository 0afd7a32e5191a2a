#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "oskf/autodiff.hpp"

namespace oskf {

/// Shape hyper-parameters of the coarse head and the refinement blocks.
struct RefinerConfig {
  int d_model = 32;
  int heads = 8;      ///< attention heads (self and deformable)
  int points = 4;     ///< deformable sampling points per head and level
  int levels = 4;     ///< pyramid levels consumed
  int channels = 32;  ///< pyramid channels
  int keypoints = 64;
  int steps = 3;      ///< refinement blocks after the coarse head
  int hidden = 0;     ///< MLP hidden width; 0 means d_model
  bool share_step_params = false;
  double layer_norm_eps = 1e-5;

  int hidden_width() const { return hidden > 0 ? hidden : d_model; }
  int head_dim() const { return d_model / heads; }
  int pos_embed_freqs() const { return d_model / 4; }
  int samples_per_head() const { return levels * points; }
  void validate() const;
};

// Parameter containers are templated on the tensor type so the same layout
// serves plain matrices (storage, gradients) and tape variables (forward
// graph). for_each visits every tensor in a fixed order with its name.

template <class T>
struct AttentionParamsT {
  T wq, bq, wk, bk, wv, bv, wo, bo, ln_gain, ln_bias;

  template <class Self, class F>
  static void for_each(Self& s, const std::string& prefix, F&& f) {
    f(prefix + "wq", s.wq);
    f(prefix + "bq", s.bq);
    f(prefix + "wk", s.wk);
    f(prefix + "bk", s.bk);
    f(prefix + "wv", s.wv);
    f(prefix + "bv", s.bv);
    f(prefix + "wo", s.wo);
    f(prefix + "bo", s.bo);
    f(prefix + "ln_gain", s.ln_gain);
    f(prefix + "ln_bias", s.ln_bias);
  }
};

template <class T>
struct DeformableParamsT {
  T offset_w, offset_b;  ///< d_model -> heads*levels*points*2, crop-normalised units
  T attn_w, attn_b;      ///< d_model -> heads*levels*points logits
  T value_w;             ///< channels -> d_model, head h uses column block h
  T out_w, out_b, ln_gain, ln_bias;

  template <class Self, class F>
  static void for_each(Self& s, const std::string& prefix, F&& f) {
    f(prefix + "offset_w", s.offset_w);
    f(prefix + "offset_b", s.offset_b);
    f(prefix + "attn_w", s.attn_w);
    f(prefix + "attn_b", s.attn_b);
    f(prefix + "value_w", s.value_w);
    f(prefix + "out_w", s.out_w);
    f(prefix + "out_b", s.out_b);
    f(prefix + "ln_gain", s.ln_gain);
    f(prefix + "ln_bias", s.ln_bias);
  }
};

/// Two-layer MLP emitting 9 numbers (6D rotation + 3 translation terms).
template <class T>
struct MlpHeadT {
  T w1, b1, w2, b2;

  template <class Self, class F>
  static void for_each(Self& s, const std::string& prefix, F&& f) {
    f(prefix + "w1", s.w1);
    f(prefix + "b1", s.b1);
    f(prefix + "w2", s.w2);
    f(prefix + "b2", s.b2);
  }
};

template <class T>
struct StepParamsT {
  T input_w, input_b;  ///< levels*channels -> d_model projection of the keypoint features
  AttentionParamsT<T> self_attn;
  DeformableParamsT<T> deform;
  AttentionParamsT<T> post_attn;
  MlpHeadT<T> pose_head;

  template <class Self, class F>
  static void for_each(Self& s, const std::string& prefix, F&& f) {
    f(prefix + "input_w", s.input_w);
    f(prefix + "input_b", s.input_b);
    AttentionParamsT<T>::for_each(s.self_attn, prefix + "self_attn.", f);
    DeformableParamsT<T>::for_each(s.deform, prefix + "deform.", f);
    AttentionParamsT<T>::for_each(s.post_attn, prefix + "post_attn.", f);
    MlpHeadT<T>::for_each(s.pose_head, prefix + "pose_head.", f);
  }
};

template <class T>
struct RefinerParamsT {
  MlpHeadT<T> coarse_head;  ///< pooled last pyramid level -> 9 outputs
  T initial_query;          ///< keypoints x d_model
  std::vector<StepParamsT<T>> steps;

  template <class Self, class F>
  static void for_each(Self& s, F&& f) {
    MlpHeadT<T>::for_each(s.coarse_head, "coarse_head.", f);
    f(std::string("initial_query"), s.initial_query);
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      StepParamsT<T>::for_each(s.steps[i], "step" + std::to_string(i) + ".", f);
    }
  }

  template <class F>
  void visit(F&& f) {
    for_each(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    for_each(*this, f);
  }

  /// Parameters used by refinement step `i` (all steps share index 0 when
  /// the weights are tied).
  const StepParamsT<T>& step(std::size_t i) const { return steps.size() == 1 ? steps[0] : steps[i]; }
};

using Matrix = Eigen::MatrixXd;
using AttentionParams = AttentionParamsT<Matrix>;
using DeformableParams = DeformableParamsT<Matrix>;
using MlpHead = MlpHeadT<Matrix>;
using StepParams = StepParamsT<Matrix>;
using RefinerParams = RefinerParamsT<Matrix>;

using AttentionVars = AttentionParamsT<ad::Var>;
using DeformableVars = DeformableParamsT<ad::Var>;
using MlpHeadVars = MlpHeadT<ad::Var>;
using StepVars = StepParamsT<ad::Var>;
using RefinerVars = RefinerParamsT<ad::Var>;

/// Parameters in the shapes implied by config: zeros everywhere except
/// unit layer-norm gains.
RefinerParams shaped_params(const RefinerConfig& config);

/// Random initialisation: fan-in scaled normals for projections, unit
/// layer-norm gains, zeros for biases and for the last pose-head layer (so
/// every refinement step starts as the identity), and the canonical 6D
/// identity in the coarse-head rotation bias.
RefinerParams init_refiner_params(const RefinerConfig& config, std::uint64_t seed);

/// Parameters with every tensor zero-filled in the right shape.
RefinerParams zero_like(const RefinerParams& params);

/// Zeroes both layers of every step's pose head.
void zero_pose_heads(RefinerParams& params);

/// Sets the coarse-head bias so the untrained head predicts gamma_z.
void set_coarse_depth_prior(RefinerParams& params, double gamma_z);

/// Checks every tensor against the shapes implied by config; throws
/// ShapeMismatch naming the first offender, InputError for non-finite values.
void validate_params(const RefinerParams& params, const RefinerConfig& config);

std::size_t parameter_count(const RefinerParams& params);

/// Puts every tensor on the tape (as variables when `trainable`).
RefinerVars bind_params(ad::Tape& tape, const RefinerParams& params, bool trainable);
/// Collects the gradients of bound variables into a parameter-shaped struct.
RefinerParams collect_gradients(const RefinerVars& vars);

/// In-place axpy over all tensors: params += alpha * delta.
void axpy(RefinerParams& params, double alpha, const RefinerParams& delta);
double squared_norm(const RefinerParams& params);

}  // namespace oskf
