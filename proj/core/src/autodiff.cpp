#include "oskf/autodiff.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>
#include <string>

#include "oskf/error.hpp"

namespace oskf::ad {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch(std::string(op) + ": shape " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  }
}

Tape& tape_of(const Var& a) {
  if (a.tape() == nullptr) throw std::logic_error("autodiff: uninitialized Var");
  return *a.tape();
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <class Forward, class Derivative>
Var unary(const Var& a, Forward f, Derivative df) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr(f);
  return t.record(std::move(out), a.needs_grad(), [a, df](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseProduct(tp.value(a).unaryExpr(df)));
  });
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(*this); }
Matrix Var::grad() const { return tape_->grad(*this); }
bool Var::needs_grad() const { return tape_->needs_grad(*this); }

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, bool needs_grad, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id_];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  Node& n = nodes_[v.id_];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& out) {
  if (out.rows() != 1 || out.cols() != 1) throw ShapeMismatch("backward needs a 1x1 output");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  accumulate(out, Matrix::Ones(1, 1));
  for (int i = out.id_; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backward || n.grad.size() == 0) continue;
    // Inputs always precede their outputs, so node i is not written here.
    n.backward(*this, n.grad);
  }
}

bool any_needs_grad(std::initializer_list<Var> vars) {
  for (const Var& v : vars) {
    if (v.needs_grad()) return true;
  }
  return false;
}

bool any_needs_grad(std::span<const Var> vars) {
  for (const Var& v : vars) {
    if (v.needs_grad()) return true;
  }
  return false;
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeMismatch("matmul: inner dims differ");
  Tape& t = tape_of(a);
  return t.record(a.value() * b.value(), any_needs_grad({a, b}),
                  [a, b](Tape& tp, const Matrix& g) {
                    if (a.needs_grad()) tp.accumulate(a, g * tp.value(b).transpose());
                    if (b.needs_grad()) tp.accumulate(b, tp.value(a).transpose() * g);
                  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return tape_of(a).record(a.value() + b.value(), any_needs_grad({a, b}),
                           [a, b](Tape& tp, const Matrix& g) {
                             tp.accumulate(a, g);
                             tp.accumulate(b, g);
                           });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return tape_of(a).record(a.value() - b.value(), any_needs_grad({a, b}),
                           [a, b](Tape& tp, const Matrix& g) {
                             tp.accumulate(a, g);
                             if (b.needs_grad()) tp.accumulate(b, -g);
                           });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return tape_of(a).record(a.value().cwiseProduct(b.value()), any_needs_grad({a, b}),
                           [a, b](Tape& tp, const Matrix& g) {
                             if (a.needs_grad()) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
                             if (b.needs_grad()) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
                           });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  return tape_of(a).record(a.value().cwiseQuotient(b.value()), any_needs_grad({a, b}),
                           [a, b](Tape& tp, const Matrix& g) {
                             const Matrix& bv = tp.value(b);
                             if (a.needs_grad()) tp.accumulate(a, g.cwiseQuotient(bv));
                             if (b.needs_grad()) {
                               const Matrix& av = tp.value(a);
                               tp.accumulate(b, -g.cwiseProduct(av).cwiseQuotient(
                                                    bv.cwiseProduct(bv)));
                             }
                           });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
  return tape_of(a).record(a.value() * s, a.needs_grad(),
                           [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, g * s); });
}

Var add_scalar(const Var& a, double s) {
  return tape_of(a).record(a.value().array() + s, a.needs_grad(),
                           [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var transpose(const Var& a) {
  return tape_of(a).record(a.value().transpose(), a.needs_grad(),
                           [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g.transpose()); });
}

Var broadcast_to(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index ar = a.rows();
  const Eigen::Index ac = a.cols();
  if ((ar != 1 && ar != rows) || (ac != 1 && ac != cols)) {
    throw ShapeMismatch("broadcast_to: incompatible shapes");
  }
  Matrix out = a.value().replicate(rows / ar, cols / ac);
  return tape_of(a).record(std::move(out), a.needs_grad(),
                           [a, ar, ac](Tape& tp, const Matrix& g) {
                             if (ar == 1 && ac == 1) {
                               tp.accumulate(a, Matrix::Constant(1, 1, g.sum()));
                             } else if (ar == 1 && ac == g.cols()) {
                               tp.accumulate(a, g.colwise().sum());
                             } else if (ac == 1 && ar == g.rows()) {
                               tp.accumulate(a, g.rowwise().sum());
                             } else {
                               tp.accumulate(a, g);
                             }
                           });
}

Var tanh(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr([](double x) { return std::tanh(x); });
  return t.record(out, a.needs_grad(), [a, out](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseProduct((1.0 - out.array().square()).matrix()));
  });
}

Var softplus(const Var& a) {
  return unary(
      a,
      [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x) { return sigmoid(x); });
}

Var silu(const Var& a) {
  return unary(
      a, [](double x) { return x * sigmoid(x); },
      [](double x) {
        const double s = sigmoid(x);
        return s + x * s * (1.0 - s);
      });
}

Var sin(const Var& a) {
  return unary(a, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

Var cos(const Var& a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); });
}

Var sqrt(const Var& a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double x) { return 0.5 / std::sqrt(x); });
}

Var abs(const Var& a) {
  return unary(a, [](double x) { return std::abs(x); },
               [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var sum(const Var& a) {
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  return tape_of(a).record(Matrix::Constant(1, 1, a.value().sum()), a.needs_grad(),
                           [a, r, c](Tape& tp, const Matrix& g) {
                             tp.accumulate(a, Matrix::Constant(r, c, g(0, 0)));
                           });
}

Var sum_rows(const Var& a) {
  const Eigen::Index r = a.rows();
  return tape_of(a).record(a.value().colwise().sum(), a.needs_grad(),
                           [a, r](Tape& tp, const Matrix& g) {
                             tp.accumulate(a, g.replicate(r, 1));
                           });
}

Var mean_rows(const Var& a) { return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows())); }

Var sum_cols(const Var& a) {
  const Eigen::Index c = a.cols();
  return tape_of(a).record(a.value().rowwise().sum(), a.needs_grad(),
                           [a, c](Tape& tp, const Matrix& g) {
                             tp.accumulate(a, g.replicate(1, c));
                           });
}

Var softmax_groups(const Var& a, Eigen::Index group) {
  if (group <= 0 || a.cols() % group != 0) throw ShapeMismatch("softmax_groups: bad group size");
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c0 = 0; c0 < x.cols(); c0 += group) {
      const auto seg = x.row(r).segment(c0, group);
      const double m = seg.maxCoeff();
      double z = 0.0;
      for (Eigen::Index i = 0; i < group; ++i) {
        y(r, c0 + i) = std::exp(seg(i) - m);
        z += y(r, c0 + i);
      }
      y.row(r).segment(c0, group) /= z;
    }
  }
  return tape_of(a).record(y, a.needs_grad(), [a, y, group](Tape& tp, const Matrix& g) {
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      for (Eigen::Index c0 = 0; c0 < y.cols(); c0 += group) {
        const auto ys = y.row(r).segment(c0, group);
        const auto gs = g.row(r).segment(c0, group);
        const double dot = ys.dot(gs);
        dx.row(r).segment(c0, group) = ys.cwiseProduct((gs.array() - dot).matrix());
      }
    }
    tp.accumulate(a, dx);
  });
}

Var layer_norm_rows(const Var& a, double eps) {
  const Matrix& x = a.value();
  const Eigen::Index n = x.cols();
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  return tape_of(a).record(xhat, a.needs_grad(), [a, xhat, inv_std](Tape& tp, const Matrix& g) {
    Matrix dx(xhat.rows(), xhat.cols());
    for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
      const double mg = g.row(r).mean();
      const double mgx = g.row(r).cwiseProduct(xhat.row(r)).mean();
      dx.row(r) = inv_std(r) * (g.row(r).array() - mg - xhat.row(r).array() * mgx).matrix();
    }
    tp.accumulate(a, dx);
  });
}

Var slice(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols) {
  if (row < 0 || col < 0 || row + rows > a.rows() || col + cols > a.cols()) {
    throw ShapeMismatch("slice out of range");
  }
  const Eigen::Index ar = a.rows();
  const Eigen::Index ac = a.cols();
  return tape_of(a).record(a.value().block(row, col, rows, cols), a.needs_grad(),
                           [a, row, col, rows, cols, ar, ac](Tape& tp, const Matrix& g) {
                             Matrix full = Matrix::Zero(ar, ac);
                             full.block(row, col, rows, cols) = g;
                             tp.accumulate(a, full);
                           });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeMismatch("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return tape_of(parts[0]).record(std::move(out), any_needs_grad(parts),
                                  [ps](Tape& tp, const Matrix& g) {
                                    Eigen::Index c0 = 0;
                                    for (const Var& p : ps) {
                                      if (p.needs_grad()) tp.accumulate(p, g.middleCols(c0, p.cols()));
                                      c0 += p.cols();
                                    }
                                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows of nothing");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeMismatch("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return tape_of(parts[0]).record(std::move(out), any_needs_grad(parts),
                                  [ps](Tape& tp, const Matrix& g) {
                                    Eigen::Index r0 = 0;
                                    for (const Var& p : ps) {
                                      if (p.needs_grad()) tp.accumulate(p, g.middleRows(r0, p.rows()));
                                      r0 += p.rows();
                                    }
                                  });
}

Var cross3(const Var& a, const Var& b) {
  if (a.rows() != 1 || a.cols() != 3 || b.rows() != 1 || b.cols() != 3) {
    throw ShapeMismatch("cross3 expects 1x3 rows");
  }
  const Eigen::Vector3d av = a.value().row(0).transpose();
  const Eigen::Vector3d bv = b.value().row(0).transpose();
  Matrix out = av.cross(bv).transpose();
  return tape_of(a).record(std::move(out), any_needs_grad({a, b}),
                           [a, b](Tape& tp, const Matrix& g) {
                             const Eigen::Vector3d gv = g.row(0).transpose();
                             const Eigen::Vector3d av2 = tp.value(a).row(0).transpose();
                             const Eigen::Vector3d bv2 = tp.value(b).row(0).transpose();
                             if (a.needs_grad()) tp.accumulate(a, bv2.cross(gv).transpose());
                             if (b.needs_grad()) tp.accumulate(b, gv.cross(av2).transpose());
                           });
}

Var min_of(std::span<const Var> values) {
  if (values.empty()) throw ShapeMismatch("min_of of nothing");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i].scalar() < values[best].scalar()) best = i;
  }
  const Var chosen = values[best];
  return tape_of(chosen).record(chosen.value(), chosen.needs_grad(),
                                [chosen](Tape& tp, const Matrix& g) { tp.accumulate(chosen, g); });
}

Var lincomb(const Var& w, std::vector<Matrix> basis) {
  if (w.rows() != 1 || w.cols() != static_cast<Eigen::Index>(basis.size()) || basis.empty()) {
    throw ShapeMismatch("lincomb: weight row must match basis size");
  }
  Matrix out = Matrix::Zero(basis[0].rows(), basis[0].cols());
  for (std::size_t i = 0; i < basis.size(); ++i) out += w.value()(0, i) * basis[i];
  return tape_of(w).record(std::move(out), w.needs_grad(),
                           [w, basis = std::move(basis)](Tape& tp, const Matrix& g) {
                             Matrix dw(1, basis.size());
                             for (std::size_t i = 0; i < basis.size(); ++i) {
                               dw(0, i) = g.cwiseProduct(basis[i]).sum();
                             }
                             tp.accumulate(w, dw);
                           });
}

Var row_norm(const Var& a) { return sqrt(sum(mul(a, a))); }

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Var xw = matmul(x, weight);
  return add(xw, broadcast_to(bias, xw.rows(), xw.cols()));
}

}  // namespace oskf::ad
