#include "oskf/refiner_graph.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

#include "oskf/error.hpp"

namespace oskf::graph {

using ad::Tape;

namespace {

Tape& tape_of(const Var& v) { return *v.tape(); }

Var affine_rows(const Var& x, const Var& gain, const Var& bias) {
  const Var g = ad::broadcast_to(gain, x.rows(), x.cols());
  const Var b = ad::broadcast_to(bias, x.rows(), x.cols());
  return ad::add(ad::mul(x, g), b);
}

Var normalize_row(const Var& v) {
  return ad::div(v, ad::broadcast_to(ad::row_norm(v), 1, v.cols()));
}

Matrix identity_offset_row() {
  Matrix m = Matrix::Zero(1, 9);
  m(0, 0) = 1.0;
  m(0, 4) = 1.0;
  return m;
}

}  // namespace

Var recover_rotation(const Var& rot6d, const GeometryTolerances& tol) {
  const Var r1 = ad::slice(rot6d, 0, 0, 1, 3);
  const Var r2 = ad::slice(rot6d, 0, 3, 1, 3);
  const Eigen::RowVector3d r1v = r1.value().row(0);
  const Eigen::RowVector3d r2v = r2.value().row(0);
  if (!(r1v.norm() > tol.degenerate)) throw DegenerateRotation("6D rotation has |r1| ~ 0");
  if (!(r1v.cross(r2v).norm() > tol.degenerate)) {
    throw DegenerateRotation("6D rotation has parallel r1 and r2");
  }
  const Var c1 = normalize_row(r1);
  const Var c3 = normalize_row(ad::cross3(c1, r2));
  const Var c2 = ad::cross3(c3, c1);
  const Var rows[] = {c1, c2, c3};
  return ad::transpose(ad::concat_rows(rows));
}

Var view_rotation(const Var& t, const GeometryTolerances& tol) {
  const Eigen::RowVector3d tv = t.value().row(0);
  if (!(tv.norm() > 0.0)) throw DegenerateDirection("view rotation of a zero translation");
  if (!(1.0 + tv.z() / tv.norm() > tol.degenerate)) {
    throw DegenerateDirection("object ray is antiparallel to the optical axis");
  }
  const Var dir = normalize_row(t);
  // [z x dir]_x = dir_x * Ex + dir_y * Ey
  Matrix ex = Matrix::Zero(3, 3);
  ex(0, 2) = 1.0;
  ex(2, 0) = -1.0;
  Matrix ey = Matrix::Zero(3, 3);
  ey(1, 2) = 1.0;
  ey(2, 1) = -1.0;
  const Var skew = ad::lincomb(ad::slice(dir, 0, 0, 1, 2), {ex, ey});
  const Var one_plus_c = ad::add_scalar(ad::slice(dir, 0, 2, 1, 1), 1.0);
  const Var skew2 = ad::matmul(skew, skew);
  const Var quad = ad::div(skew2, ad::broadcast_to(one_plus_c, 3, 3));
  const Var eye = tape_of(t).constant(Matrix::Identity(3, 3));
  return ad::add(ad::add(eye, skew), quad);
}

Var decode_translation(const Var& site, const CropFrame& crop, const CameraIntrinsics& k) {
  crop.validate();
  const double s = crop.s_bbox();
  const Var gx = ad::slice(site, 0, 0, 1, 1);
  const Var gy = ad::slice(site, 0, 1, 1, 1);
  const Var tz = ad::scale(ad::slice(site, 0, 2, 1, 1), crop.ratio());
  const Var ox = ad::add_scalar(ad::scale(gx, s), crop.center.x());
  const Var oy = ad::add_scalar(ad::scale(gy, s), crop.center.y());
  const Var rx = ad::scale(ad::add_scalar(ox, -k.cx), 1.0 / k.fx);
  const Var ry = ad::scale(ad::add_scalar(oy, -k.cy), 1.0 / k.fy);
  const Var parts[] = {ad::mul(tz, rx), ad::mul(tz, ry), tz};
  return ad::concat_cols(parts);
}

Var project_to_crop(const Var& rotation, const Var& translation, const Matrix& keypoints,
                    const CropFrame& crop, const CameraIntrinsics& k, double crop_size,
                    const GeometryTolerances& tol) {
  Tape& tape = tape_of(rotation);
  const Eigen::Index n = keypoints.rows();
  const Var pts = ad::add(ad::matmul(tape.constant(keypoints), ad::transpose(rotation)),
                          ad::broadcast_to(translation, n, 3));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = pts.value()(i, 2);
    if (!(z > tol.near_plane)) throw BehindCamera(static_cast<std::size_t>(i), z);
  }
  const Var z = ad::slice(pts, 0, 2, n, 1);
  const double s = crop.s_bbox();
  const double zoom = crop_size / s;
  const Var u = ad::div(ad::slice(pts, 0, 0, n, 1), z);
  const Var v = ad::div(ad::slice(pts, 0, 1, n, 1), z);
  // crop_px = (fx * x/z + cx - (center - s/2)) * crop_size / s
  const Var cu = ad::add_scalar(ad::scale(u, k.fx * zoom),
                                (k.cx - (crop.center.x() - 0.5 * s)) * zoom);
  const Var cv = ad::add_scalar(ad::scale(v, k.fy * zoom),
                                (k.cy - (crop.center.y() - 0.5 * s)) * zoom);
  const Var parts[] = {cu, cv};
  return ad::concat_cols(parts);
}

StateVars apply_offset(const StateVars& prev, const Var& offset, const GeometryTolerances& tol) {
  StateVars next;
  next.rotation = ad::matmul(recover_rotation(ad::slice(offset, 0, 0, 1, 6), tol), prev.rotation);
  const Var gxy = ad::add(ad::slice(prev.site, 0, 0, 1, 2), ad::slice(offset, 0, 6, 1, 2));
  const Var factor = ad::add_scalar(ad::tanh(ad::slice(offset, 0, 8, 1, 1)), 1.0);
  const Var gz = ad::mul(ad::slice(prev.site, 0, 2, 1, 1), factor);
  const Var parts[] = {gxy, gz};
  next.site = ad::concat_cols(parts);
  return next;
}

Var positional_embedding(const Var& positions_px, double crop_size, int d_model) {
  if (d_model % 4 != 0) throw BadWidth("positional embedding width must be divisible by 4");
  const int freqs = d_model / 4;
  Matrix omega(1, freqs);
  for (int i = 0; i < freqs; ++i) {
    omega(0, i) = 2.0 * std::numbers::pi * std::pow(10000.0, -4.0 * i / d_model);
  }
  Tape& tape = tape_of(positions_px);
  const Var w = tape.constant(omega);
  const Var normalized = ad::scale(positions_px, 1.0 / crop_size);
  const Eigen::Index n = positions_px.rows();
  std::vector<Var> blocks;
  for (int axis = 0; axis < 2; ++axis) {
    const Var angle = ad::matmul(ad::slice(normalized, 0, axis, n, 1), w);
    blocks.push_back(ad::sin(angle));
    blocks.push_back(ad::cos(angle));
  }
  return ad::concat_cols(blocks);
}

Var sample_levels(const FeaturePyramid& pyramid, const Var& positions_px) {
  pyramid.validate();
  const int levels = pyramid.num_levels();
  const int channels = pyramid.channels();
  const Eigen::Index n = positions_px.rows();
  const Matrix& pos = positions_px.value();
  Matrix out(n, levels * channels);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int l = 0; l < levels; ++l) {
      out.row(i).segment(l * channels, channels) =
          bilinear_sample(pyramid.levels[l], Vec2(pos(i, 0), pos(i, 1))).transpose();
    }
  }
  const FeaturePyramid* pyr = &pyramid;
  return tape_of(positions_px)
      .record(std::move(out), positions_px.needs_grad(),
              [positions_px, pyr, levels, channels](Tape& tp, const Matrix& g) {
                const Matrix& p = tp.value(positions_px);
                Matrix dpos = Matrix::Zero(p.rows(), 2);
                for (Eigen::Index i = 0; i < p.rows(); ++i) {
                  for (int l = 0; l < levels; ++l) {
                    const FeatureMap& map = pyr->levels[l];
                    const BilinearTaps taps = bilinear_taps(map, Vec2(p(i, 0), p(i, 1)));
                    for (int t = 0; t < 4; ++t) {
                      if (!taps.inside[t]) continue;
                      const double* f = map.pixel(taps.y[t], taps.x[t]);
                      double dot = 0.0;
                      for (int c = 0; c < channels; ++c) dot += g(i, l * channels + c) * f[c];
                      dpos(i, 0) += taps.dweight_dx[t] * dot;
                      dpos(i, 1) += taps.dweight_dy[t] * dot;
                    }
                  }
                }
                tp.accumulate(positions_px, dpos);
              });
}

Var deformable_aggregate(const FeaturePyramid& pyramid, const Var& base_px, const Var& offsets_px,
                         const Var& weights, int heads, int points) {
  pyramid.validate();
  const int levels = pyramid.num_levels();
  const int channels = pyramid.channels();
  const Eigen::Index n = base_px.rows();
  const int slots = heads * levels * points;
  if (base_px.cols() != 2 || offsets_px.rows() != n || offsets_px.cols() != 2 * slots ||
      weights.rows() != n || weights.cols() != slots) {
    throw ShapeMismatch("deformable_aggregate: inconsistent shapes");
  }
  const Matrix& base = base_px.value();
  const Matrix& off = offsets_px.value();
  const Matrix& a = weights.value();
  Matrix out = Matrix::Zero(n, heads * channels);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (int h = 0; h < heads; ++h) {
      for (int l = 0; l < levels; ++l) {
        for (int j = 0; j < points; ++j) {
          const int slot = (h * levels + l) * points + j;
          const Vec2 p(base(k, 0) + off(k, 2 * slot), base(k, 1) + off(k, 2 * slot + 1));
          const Eigen::VectorXd sample = bilinear_sample(pyramid.levels[l], p);
          out.row(k).segment(h * channels, channels) += a(k, slot) * sample.transpose();
        }
      }
    }
  }
  const FeaturePyramid* pyr = &pyramid;
  const bool needs = ad::any_needs_grad({base_px, offsets_px, weights});
  return tape_of(base_px).record(
      std::move(out), needs,
      [base_px, offsets_px, weights, pyr, heads, levels, points, channels](Tape& tp,
                                                                           const Matrix& g) {
        const Matrix& base = tp.value(base_px);
        const Matrix& off = tp.value(offsets_px);
        const Matrix& a = tp.value(weights);
        Matrix dbase = Matrix::Zero(base.rows(), 2);
        Matrix doff = Matrix::Zero(off.rows(), off.cols());
        Matrix da = Matrix::Zero(a.rows(), a.cols());
        for (Eigen::Index k = 0; k < base.rows(); ++k) {
          for (int h = 0; h < heads; ++h) {
            const auto gh = g.row(k).segment(h * channels, channels);
            for (int l = 0; l < levels; ++l) {
              const FeatureMap& map = pyr->levels[l];
              for (int j = 0; j < points; ++j) {
                const int slot = (h * levels + l) * points + j;
                const Vec2 p(base(k, 0) + off(k, 2 * slot), base(k, 1) + off(k, 2 * slot + 1));
                const BilinearTaps taps = bilinear_taps(map, p);
                double dw = 0.0;
                double dx = 0.0;
                double dy = 0.0;
                for (int t = 0; t < 4; ++t) {
                  if (!taps.inside[t]) continue;
                  const double* f = map.pixel(taps.y[t], taps.x[t]);
                  double dot = 0.0;
                  for (int c = 0; c < channels; ++c) dot += gh(c) * f[c];
                  dw += taps.weight[t] * dot;
                  dx += taps.dweight_dx[t] * dot;
                  dy += taps.dweight_dy[t] * dot;
                }
                da(k, slot) = dw;
                dx *= a(k, slot);
                dy *= a(k, slot);
                dbase(k, 0) += dx;
                dbase(k, 1) += dy;
                doff(k, 2 * slot) = dx;
                doff(k, 2 * slot + 1) = dy;
              }
            }
          }
        }
        tp.accumulate(base_px, dbase);
        tp.accumulate(offsets_px, doff);
        tp.accumulate(weights, da);
      });
}

Var self_attention(const Var& q_in, const Var* pos, const AttentionVars& p, int heads, double eps) {
  const Eigen::Index n = q_in.rows();
  const Eigen::Index d = q_in.cols();
  if (d % heads != 0) throw ShapeMismatch("self_attention: width not divisible by heads");
  const Eigen::Index dh = d / heads;
  const Var qk_in = pos ? ad::add(q_in, *pos) : q_in;
  const Var q = ad::linear(qk_in, p.wq, p.bq);
  const Var k = ad::linear(qk_in, p.wk, p.bk);
  const Var v = ad::linear(q_in, p.wv, p.bv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Var qh = ad::slice(q, 0, h * dh, n, dh);
    const Var kh = ad::slice(k, 0, h * dh, n, dh);
    const Var vh = ad::slice(v, 0, h * dh, n, dh);
    const Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    outs.push_back(ad::matmul(ad::softmax_groups(scores, n), vh));
  }
  const Var attended = ad::linear(ad::concat_cols(outs), p.wo, p.bo);
  return affine_rows(ad::layer_norm_rows(ad::add(q_in, attended), eps), p.ln_gain, p.ln_bias);
}

DeformableOutput deformable_attention(const Var& q_s, const Var& positions_px,
                                      const FeaturePyramid& pyramid, const DeformableVars& p,
                                      const RefinerConfig& config) {
  if (pyramid.num_levels() != config.levels || pyramid.channels() != config.channels) {
    throw ShapeMismatch("pyramid does not match refiner levels/channels");
  }
  const Eigen::Index n = q_s.rows();
  const int heads = config.heads;
  const int channels = config.channels;
  const int dh = config.head_dim();
  DeformableOutput out;
  out.offsets_px = ad::scale(ad::linear(q_s, p.offset_w, p.offset_b), pyramid.crop_size);
  out.weights = ad::softmax_groups(ad::linear(q_s, p.attn_w, p.attn_b), config.samples_per_head());
  const Var aggregated =
      deformable_aggregate(pyramid, positions_px, out.offsets_px, out.weights, heads, config.points);
  std::vector<Var> per_head;
  per_head.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Var gh = ad::slice(aggregated, 0, h * channels, n, channels);
    const Var wh = ad::slice(p.value_w, 0, h * dh, channels, dh);
    per_head.push_back(ad::matmul(gh, wh));
  }
  out.head_outputs = ad::concat_cols(per_head);
  const Var projected = ad::linear(out.head_outputs, p.out_w, p.out_b);
  out.output = affine_rows(ad::layer_norm_rows(ad::add(q_s, projected), config.layer_norm_eps),
                           p.ln_gain, p.ln_bias);
  return out;
}

Var pose_head(const Var& q_p, const MlpHeadVars& p) {
  const Var pooled = ad::mean_rows(q_p);
  const Var hidden = ad::silu(ad::linear(pooled, p.w1, p.b1));
  const Var raw = ad::linear(hidden, p.w2, p.b2);
  return ad::add(raw, tape_of(q_p).constant(identity_offset_row()));
}

CoarseOutput coarse_pose(const FeaturePyramid& pyramid, const MlpHeadVars& p, const CropFrame& crop,
                         const CameraIntrinsics& k) {
  pyramid.validate();
  const FeatureMap& last = pyramid.levels.back();
  Matrix pooled = Matrix::Zero(1, last.channels());
  for (int y = 0; y < last.height(); ++y) {
    for (int x = 0; x < last.width(); ++x) {
      const double* f = last.pixel(y, x);
      for (int c = 0; c < last.channels(); ++c) pooled(0, c) += f[c];
    }
  }
  pooled /= static_cast<double>(last.height() * last.width());

  Tape& tape = tape_of(p.w1);
  const Var hidden = ad::silu(ad::linear(tape.constant(pooled), p.w1, p.b1));
  CoarseOutput out;
  out.raw = ad::linear(hidden, p.w2, p.b2);
  const Var gz = ad::softplus(ad::slice(out.raw, 0, 8, 1, 1));
  const Var site_parts[] = {ad::slice(out.raw, 0, 6, 1, 2), gz};
  out.state.site = ad::concat_cols(site_parts);
  const Var allocentric = recover_rotation(ad::slice(out.raw, 0, 0, 1, 6));
  const Var t = decode_translation(out.state.site, crop, k);
  out.state.rotation = ad::matmul(view_rotation(t), allocentric);
  return out;
}

StepOutput refine_step(const StateVars& state, const Var& q_prev, const FeaturePyramid& pyramid,
                       const Matrix& keypoints, const CropFrame& crop, const CameraIntrinsics& k,
                       const StepVars& p, const RefinerConfig& config) {
  if (q_prev.rows() != keypoints.rows() || q_prev.cols() != config.d_model) {
    throw ShapeMismatch("query shape does not match keypoints x d_model");
  }
  StepOutput out;
  const Var t = decode_translation(state.site, crop, k);
  out.positions_px =
      project_to_crop(state.rotation, t, keypoints, crop, k, pyramid.crop_size);
  out.embedding = positional_embedding(out.positions_px, pyramid.crop_size, config.d_model);
  const Var features = sample_levels(pyramid, out.positions_px);
  const Var q_in = ad::add(q_prev, ad::linear(features, p.input_w, p.input_b));
  out.q_s = self_attention(q_in, &out.embedding, p.self_attn, config.heads, config.layer_norm_eps);
  const DeformableOutput deform =
      deformable_attention(out.q_s, out.positions_px, pyramid, p.deform, config);
  out.query_next = deform.output;
  out.q_p = self_attention(deform.output, nullptr, p.post_attn, config.heads,
                           config.layer_norm_eps);
  out.offset = pose_head(out.q_p, p.pose_head);
  out.state = apply_offset(state, out.offset);
  return out;
}

std::vector<StateVars> cascade(const FeaturePyramid& pyramid, const Matrix& keypoints,
                               const CropFrame& crop, const CameraIntrinsics& k,
                               const RefinerVars& params, const RefinerConfig& config) {
  if (config.steps < 0) throw InputError("cascade needs steps >= 0");
  if (config.steps > 0 && params.steps.size() != 1 &&
      params.steps.size() != static_cast<std::size_t>(config.steps)) {
    throw ShapeMismatch("parameter blocks do not match the configured step count");
  }
  std::vector<StateVars> states;
  states.reserve(config.steps + 1);
  states.push_back(coarse_pose(pyramid, params.coarse_head, crop, k).state);
  Var query = params.initial_query;
  for (int i = 0; i < config.steps; ++i) {
    StepOutput step = refine_step(states.back(), query, pyramid, keypoints, crop, k,
                                  params.step(static_cast<std::size_t>(i)), config);
    query = step.query_next;
    states.push_back(step.state);
  }
  return states;
}

Matrix keypoint_matrix(const KeypointSet& keypoints) {
  Matrix m(static_cast<Eigen::Index>(keypoints.k()), 3);
  for (std::size_t i = 0; i < keypoints.k(); ++i) m.row(static_cast<Eigen::Index>(i)) = keypoints.keypoints[i].transpose();
  return m;
}

}  // namespace oskf::graph
