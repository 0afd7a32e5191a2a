#pragma once

// Minimal reverse-mode differentiation over dense matrices. A Tape records
// every operation in evaluation order; backward() walks it in reverse and
// accumulates gradients into the nodes that require them. Nodes built only
// from constants never allocate gradient storage.

#include <Eigen/Core>
#include <functional>
#include <span>
#include <vector>

namespace oskf::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Gradient after Tape::backward; a zero matrix when nothing flowed here.
  Matrix grad() const;
  double scalar() const { return value()(0, 0); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool needs_grad() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Receives the gradient of the node being processed.
  using Backward = std::function<void(Tape&, const Matrix&)>;

  Var constant(Matrix value);
  Var variable(Matrix value);

  /// Records an op output. `needs_grad` should be true iff any input needs
  /// a gradient; the backward callback is dropped otherwise.
  Var record(Matrix value, bool needs_grad, Backward backward);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
  void backward(const Var& out);

  const Matrix& value(const Var& v) const { return nodes_[v.id_].value; }
  bool needs_grad(const Var& v) const { return nodes_[v.id_].needs_grad; }
  Matrix grad(const Var& v) const;

  /// Adds g into v's gradient (no-op for constants).
  void accumulate(const Var& v, const Matrix& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

bool any_needs_grad(std::initializer_list<Var> vars);
bool any_needs_grad(std::span<const Var> vars);

// Linear algebra and elementwise ops. Elementwise binary ops require equal
// shapes; use broadcast_to to expand rows, columns or scalars.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var transpose(const Var& a);
/// Expands a (1x1, 1xn, mx1 or mxn) to rows x cols.
Var broadcast_to(const Var& a, Eigen::Index rows, Eigen::Index cols);

Var tanh(const Var& a);
Var softplus(const Var& a);
Var silu(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var sqrt(const Var& a);
Var abs(const Var& a);

Var sum(const Var& a);        ///< 1x1
Var sum_rows(const Var& a);   ///< 1 x cols, sums down each column
Var mean_rows(const Var& a);  ///< 1 x cols
Var sum_cols(const Var& a);   ///< rows x 1

/// Softmax along each row, independently over consecutive column groups of
/// `group` entries.
Var softmax_groups(const Var& a, Eigen::Index group);
/// Per-row (x - mean) / sqrt(var + eps), population variance.
Var layer_norm_rows(const Var& a, double eps);

Var slice(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

/// Cross product of two 1x3 rows.
Var cross3(const Var& a, const Var& b);
/// Smallest of several 1x1 nodes; the gradient goes to the argmin (first on ties).
Var min_of(std::span<const Var> values);
/// sum_i w(0, i) * basis[i] for a 1xn weight row and constant matrices.
Var lincomb(const Var& w, std::vector<Matrix> basis);

// Convenience composites.
Var row_norm(const Var& a);  ///< 1xn -> 1x1 Euclidean norm
Var linear(const Var& x, const Var& weight, const Var& bias);  ///< x W + 1 b

}  // namespace oskf::ad
