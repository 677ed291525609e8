#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Var is a handle to a node holding a value, an accumulated gradient and a
// closure that pushes the node's gradient to its parents. Graphs are built
// eagerly by the op functions below and freed when the last handle drops.
// Leaves created with param() feed their gradient into a Parameter, which is
// what optimizers see.

#include "brantx/common.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace brantx::ag {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct Node {
  Matrix value;
  Matrix grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  Parameter* param = nullptr;
  bool requires_grad = false;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  const Matrix& value() const { return node_->value; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

inline Var constant(Matrix m) {
  auto n = std::make_shared<Node>();
  n->value = std::move(m);
  return Var(std::move(n));
}

inline Var scalar_constant(double v) { return constant(Matrix::Constant(1, 1, v)); }

inline Var param(Parameter& p) {
  auto n = std::make_shared<Node>();
  n->value = p.value;
  n->param = &p;
  n->requires_grad = true;
  return Var(std::move(n));
}

namespace detail {

// Creates the result node. Parents and the backward closure are kept only
// when some parent needs a gradient.
template <class Fn>
Var make(Matrix value, std::vector<Var> parents, Fn&& fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
  if (n->requires_grad) {
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::forward<Fn>(fn);
  }
  return Var(std::move(n));
}

inline bool wants(const std::shared_ptr<Node>& p) { return p->requires_grad; }

}  // namespace detail

// Runs reverse accumulation from a 1x1 root and adds leaf gradients into
// their Parameters.
inline void backward(const Var& root) {
  require(root.rows() == 1 && root.cols() == 1, "backward: root must be a scalar");
  if (!root.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.size() == 0) continue;
    if (n->backward_fn) n->backward_fn(*n);
    if (n->param) n->param->grad += n->grad;
  }
}

// ---------------------------------------------------------------------------
// Elementwise and linear algebra

inline Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return detail::make(a.value() + b.value(), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (detail::wants(p)) p->accumulate(self.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  return detail::make(a.value() - b.value(), {a, b}, [](Node& self) {
    if (detail::wants(self.parents[0])) self.parents[0]->accumulate(self.grad);
    if (detail::wants(self.parents[1])) self.parents[1]->accumulate(-self.grad);
  });
}

inline Var hadamard(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard: shape mismatch");
  return detail::make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (detail::wants(pa)) pa->accumulate(self.grad.cwiseProduct(pb->value));
    if (detail::wants(pb)) pb->accumulate(self.grad.cwiseProduct(pa->value));
  });
}

inline Var scale(const Var& a, double s) {
  return detail::make(a.value() * s, {a}, [s](Node& self) { self.parents[0]->accumulate(self.grad * s); });
}

// a + row broadcast over rows; row is 1 x cols.
inline Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: bias shape mismatch");
  Matrix v = a.value().rowwise() + row.value().row(0);
  return detail::make(std::move(v), {a, row}, [](Node& self) {
    if (detail::wants(self.parents[0])) self.parents[0]->accumulate(self.grad);
    if (detail::wants(self.parents[1])) self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

// a + col broadcast over columns; col is rows x 1.
inline Var add_col(const Var& a, const Var& col) {
  require(col.cols() == 1 && col.rows() == a.rows(), "add_col: bias shape mismatch");
  Matrix v = a.value().colwise() + col.value().col(0);
  return detail::make(std::move(v), {a, col}, [](Node& self) {
    if (detail::wants(self.parents[0])) self.parents[0]->accumulate(self.grad);
    if (detail::wants(self.parents[1])) self.parents[1]->accumulate(self.grad.rowwise().sum());
  });
}

inline Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + ")");
  Matrix v = a.value() * b.value();
  return detail::make(std::move(v), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (detail::wants(pa)) pa->accumulate(self.grad * pb->value.transpose());
    if (detail::wants(pb)) pb->accumulate(pa->value.transpose() * self.grad);
  });
}

// a * b^T
inline Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.cols()) + ")");
  Matrix v = a.value() * b.value().transpose();
  return detail::make(std::move(v), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (detail::wants(pa)) pa->accumulate(self.grad * pb->value);
    if (detail::wants(pb)) pb->accumulate(self.grad.transpose() * pa->value);
  });
}

inline Var transpose(const Var& a) {
  return detail::make(a.value().transpose(), {a},
                      [](Node& self) { self.parents[0]->accumulate(self.grad.transpose()); });
}

// Exact (erf) GELU.
inline Var gelu(const Var& a) {
  const Matrix& x = a.value();
  Matrix v = x.unaryExpr([](double t) { return 0.5 * t * (1.0 + std::erf(t / std::numbers::sqrt2)); });
  return detail::make(std::move(v), {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix d = x.unaryExpr([](double t) {
      const double cdf = 0.5 * (1.0 + std::erf(t / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * t * t) / std::sqrt(2 * std::numbers::pi);
      return cdf + t * pdf;
    });
    self.parents[0]->accumulate(self.grad.cwiseProduct(d));
  });
}

inline Var sum(const Var& a) {
  return detail::make(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
    const auto& p = self.parents[0];
    p->accumulate(Matrix::Constant(p->value.rows(), p->value.cols(), self.grad(0, 0)));
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

// Sum of entries weighted by a constant matrix; handy scalar readout.
inline Var weighted_sum(const Var& a, const Matrix& w) {
  require(w.rows() == a.rows() && w.cols() == a.cols(), "weighted_sum: shape mismatch");
  return detail::make(Matrix::Constant(1, 1, a.value().cwiseProduct(w).sum()), {a},
                      [w](Node& self) { self.parents[0]->accumulate(w * self.grad(0, 0)); });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Var concat_cols(const Var& a, const Var& b) {
  require(a.rows() == b.rows(), "concat_cols: row counts differ");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const Index ca = a.cols();
  return detail::make(std::move(v), {a, b}, [ca](Node& self) {
    if (detail::wants(self.parents[0])) self.parents[0]->accumulate(self.grad.leftCols(ca));
    if (detail::wants(self.parents[1])) self.parents[1]->accumulate(self.grad.rightCols(self.grad.cols() - ca));
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: nothing to concatenate");
  Index rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == parts.front().cols(), "concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix v(rows, parts.front().cols());
  std::vector<Index> offsets;
  Index r = 0;
  for (const auto& p : parts) {
    offsets.push_back(r);
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return detail::make(std::move(v), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = self.parents[i];
      if (detail::wants(p)) p->accumulate(self.grad.middleRows(offsets[i], p->value.rows()));
    }
  });
}

inline Var slice_rows(const Var& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  return detail::make(a.value().middleRows(start, count), {a}, [start, count](Node& self) {
    const auto& p = self.parents[0];
    Matrix g = Matrix::Zero(p->value.rows(), p->value.cols());
    g.middleRows(start, count) = self.grad;
    p->accumulate(g);
  });
}

// [G*P x D] (row g*P + p) -> [G x P*D], patch-major within each row.
inline Var flatten_groups(const Var& x, Index group) {
  require(group >= 1 && x.rows() % group == 0, "flatten_groups: rows not divisible by group size");
  const Index g_count = x.rows() / group;
  const Index d = x.cols();
  Matrix v(g_count, group * d);
  for (Index g = 0; g < g_count; ++g)
    for (Index p = 0; p < group; ++p) v.block(g, p * d, 1, d) = x.value().row(g * group + p);
  return detail::make(std::move(v), {x}, [group, d, g_count](Node& self) {
    Matrix gx(g_count * group, d);
    for (Index g = 0; g < g_count; ++g)
      for (Index p = 0; p < group; ++p) gx.row(g * group + p) = self.grad.block(g, p * d, 1, d);
    self.parents[0]->accumulate(gx);
  });
}

// out(r, c) = a(r, idx(r, c)).
inline Var gather_cols(const Var& a, const Eigen::MatrixXi& idx) {
  require(idx.rows() == a.rows(), "gather_cols: index rows differ from input rows");
  Matrix v(idx.rows(), idx.cols());
  for (Index r = 0; r < idx.rows(); ++r)
    for (Index c = 0; c < idx.cols(); ++c) {
      require(idx(r, c) >= 0 && idx(r, c) < a.cols(), "gather_cols: index out of range");
      v(r, c) = a.value()(r, idx(r, c));
    }
  return detail::make(std::move(v), {a}, [idx](Node& self) {
    const auto& p = self.parents[0];
    Matrix g = Matrix::Zero(p->value.rows(), p->value.cols());
    for (Index r = 0; r < idx.rows(); ++r)
      for (Index c = 0; c < idx.cols(); ++c) g(r, idx(r, c)) += self.grad(r, c);
    p->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Normalization

// Row-wise layer normalization with learnable gain and bias (both 1 x D).
inline Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
  const Index d = x.cols();
  require(gain.rows() == 1 && gain.cols() == d && bias.rows() == 1 && bias.cols() == d,
          "layer_norm_rows: gain/bias shape mismatch");
  const Matrix& xv = x.value();
  Vector mu = xv.rowwise().mean();
  Matrix centered = xv.colwise() - mu;
  Vector inv_sd = ((centered.array().square().rowwise().sum() / static_cast<double>(d)) + eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_sd.array();
  Matrix v = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return detail::make(std::move(v), {x, gain, bias}, [xhat, inv_sd](Node& self) {
    const Matrix& g = self.grad;
    auto& px = self.parents[0];
    auto& pg = self.parents[1];
    auto& pb = self.parents[2];
    if (detail::wants(pg)) pg->accumulate(g.cwiseProduct(xhat).colwise().sum());
    if (detail::wants(pb)) pb->accumulate(g.colwise().sum());
    if (detail::wants(px)) {
      Matrix dxhat = g.array().rowwise() * pg->value.row(0).array();
      Vector m1 = dxhat.rowwise().mean();
      Vector m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
      Matrix dx = (dxhat.colwise() - m1) - (xhat.array().colwise() * m2.array()).matrix();
      px->accumulate(dx.array().colwise() * inv_sd.array());
    }
  });
}

// Each row divided by its Euclidean norm (floored at eps).
inline Var l2_normalize_rows(const Var& x, double eps = 1e-12) {
  Vector norms = x.value().rowwise().norm().cwiseMax(eps);
  Matrix y = x.value().array().colwise() / norms.array();
  return detail::make(y, {x}, [y, norms](Node& self) {
    Vector dots = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix dx = self.grad - (y.array().colwise() * dots.array()).matrix();
    self.parents[0]->accumulate(dx.array().colwise() / norms.array());
  });
}

// ---------------------------------------------------------------------------
// Softmax family

inline Matrix softmax_rows_value(const Matrix& logits) {
  Matrix shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Matrix e = shifted.array().exp();
  return e.array().colwise() / e.rowwise().sum().array();
}

// Softmax over the entries of a column vector.
inline Var softmax_col(const Var& x) {
  require(x.cols() == 1, "softmax_col: expects a column vector");
  Matrix s = softmax_rows_value(x.value().transpose()).transpose();
  return detail::make(s, {x}, [s](Node& self) {
    const double dot = self.grad.cwiseProduct(s).sum();
    self.parents[0]->accumulate(s.cwiseProduct((self.grad.array() - dot).matrix()));
  });
}

// Attention pooling. logits is B x T, values is (B*T) x D with row b*T + t
// holding token t of item b. Row b of the result is
// sum_t softmax(logits_b)[t] * values[b*T + t].
inline Var attention_pool(const Var& logits, const Var& values) {
  const Index b = logits.rows(), t = logits.cols(), d = values.cols();
  require(t >= 1 && values.rows() == b * t, "attention_pool: values must hold B*T rows");
  Matrix w = softmax_rows_value(logits.value());
  Matrix out(b, d);
  for (Index i = 0; i < b; ++i) out.row(i) = w.row(i) * values.value().middleRows(i * t, t);
  return detail::make(std::move(out), {logits, values}, [w, b, t](Node& self) {
    const auto& pl = self.parents[0];
    const auto& pv = self.parents[1];
    if (detail::wants(pv)) {
      Matrix gv(b * t, self.grad.cols());
      for (Index i = 0; i < b; ++i) gv.middleRows(i * t, t) = w.row(i).transpose() * self.grad.row(i);
      pv->accumulate(gv);
    }
    if (detail::wants(pl)) {
      Matrix gl(b, t);
      for (Index i = 0; i < b; ++i) {
        RowVector dw = self.grad.row(i) * pv->value.middleRows(i * t, t).transpose();
        const double dot = dw.dot(w.row(i));
        gl.row(i) = w.row(i).array() * (dw.array() - dot);
      }
      pl->accumulate(gl);
    }
  });
}

// Mean over rows of -log softmax(logits_r)[target_r].
inline Var cross_entropy_rows(const Var& logits, const std::vector<int>& targets) {
  const Index r = logits.rows();
  require(static_cast<Index>(targets.size()) == r, "cross_entropy_rows: one target per row required");
  const Matrix& z = logits.value();
  Vector mx = z.rowwise().maxCoeff();
  Vector lse = ((z.colwise() - mx).array().exp().rowwise().sum().log()).matrix() + mx;
  double loss = 0;
  for (Index i = 0; i < r; ++i) {
    require(targets[i] >= 0 && targets[i] < z.cols(), "cross_entropy_rows: target out of range");
    loss += lse[i] - z(i, targets[i]);
  }
  loss /= static_cast<double>(r);
  return detail::make(Matrix::Constant(1, 1, loss), {logits}, [targets, lse, r](Node& self) {
    const auto& p = self.parents[0];
    Matrix g = (p->value.colwise() - lse).array().exp();
    for (Index i = 0; i < r; ++i) g(i, targets[i]) -= 1.0;
    p->accumulate(g * (self.grad(0, 0) / static_cast<double>(r)));
  });
}

// ---------------------------------------------------------------------------
// Layers with fused backward passes

// 1-D convolution applied independently to `segments` equal-length segments
// laid side by side: x is Cin x (segments * len), weight is
// Cout x (Cin * kernel) with column ci * kernel + k, bias is Cout x 1.
// Zero padding of `pad` on both ends of every segment.
inline Var conv1d_segments(const Var& x, const Var& weight, const Var& bias, Index segments, Index len,
                           Index kernel, Index stride, Index pad) {
  const Index cin = x.rows();
  require(segments >= 1 && x.cols() == segments * len, "conv1d_segments: input width is not segments * len");
  require(weight.cols() == cin * kernel, "conv1d_segments: weight expects " +
                                             std::to_string(weight.cols() / std::max<Index>(kernel, 1)) +
                                             " input channels, got " + std::to_string(cin));
  require(bias.rows() == weight.rows() && bias.cols() == 1, "conv1d_segments: bias shape mismatch");
  const Index lout = (len + 2 * pad - kernel) / stride + 1;
  require(lout >= 1, "conv1d_segments: segment too short for the kernel");
  const Matrix& xv = x.value();
  Matrix cols = Matrix::Zero(cin * kernel, segments * lout);
  for (Index s = 0; s < segments; ++s)
    for (Index t = 0; t < lout; ++t) {
      const Index base = t * stride - pad;
      for (Index k = 0; k < kernel; ++k) {
        const Index src = base + k;
        if (src < 0 || src >= len) continue;
        for (Index ci = 0; ci < cin; ++ci) cols(ci * kernel + k, s * lout + t) = xv(ci, s * len + src);
      }
    }
  Matrix v = weight.value() * cols;
  v.colwise() += bias.value().col(0);
  return detail::make(std::move(v), {x, weight, bias},
                      [cols, segments, len, lout, kernel, stride, pad, cin](Node& self) {
                        const Matrix& g = self.grad;
                        auto& px = self.parents[0];
                        auto& pw = self.parents[1];
                        auto& pb = self.parents[2];
                        if (detail::wants(pw)) pw->accumulate(g * cols.transpose());
                        if (detail::wants(pb)) pb->accumulate(g.rowwise().sum());
                        if (detail::wants(px)) {
                          Matrix dcols = pw->value.transpose() * g;
                          Matrix dx = Matrix::Zero(cin, segments * len);
                          for (Index s = 0; s < segments; ++s)
                            for (Index t = 0; t < lout; ++t) {
                              const Index base = t * stride - pad;
                              for (Index k = 0; k < kernel; ++k) {
                                const Index src = base + k;
                                if (src < 0 || src >= len) continue;
                                for (Index ci = 0; ci < cin; ++ci)
                                  dx(ci, s * len + src) += dcols(ci * kernel + k, s * lout + t);
                              }
                            }
                          px->accumulate(dx);
                        }
                      });
}

// Mean over each of `segments` equal-width column blocks: C x (S*L) -> C x S.
inline Var segment_mean(const Var& x, Index segments) {
  require(segments >= 1 && x.cols() % segments == 0, "segment_mean: width not divisible by segment count");
  const Index len = x.cols() / segments;
  Matrix v(x.rows(), segments);
  for (Index s = 0; s < segments; ++s) v.col(s) = x.value().middleCols(s * len, len).rowwise().mean();
  return detail::make(std::move(v), {x}, [segments, len](Node& self) {
    Matrix g(self.grad.rows(), segments * len);
    for (Index s = 0; s < segments; ++s)
      g.middleCols(s * len, len) = (self.grad.col(s) / static_cast<double>(len)).replicate(1, len);
    self.parents[0]->accumulate(g);
  });
}

// Multi-head scaled dot-product self-attention over independent groups of
// `group` consecutive rows. q, k, v are T x D (already projected); heads
// split D into equal slices. Returns T x D.
inline Var grouped_attention(const Var& q, const Var& k, const Var& v, Index heads, Index group) {
  const Index t = q.rows();
  const Index d = q.cols();
  require(k.rows() == t && v.rows() == t && k.cols() == d && v.cols() == d, "grouped_attention: shape mismatch");
  require(heads >= 1 && d % heads == 0, "grouped_attention: width not divisible by head count");
  require(group >= 1 && t % group == 0, "grouped_attention: rows not divisible by group size");
  const Index dh = d / heads;
  const Index groups = t / group;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Matrix> attn(static_cast<std::size_t>(groups * heads));
  Matrix out(t, d);
  for (Index g = 0; g < groups; ++g)
    for (Index h = 0; h < heads; ++h) {
      auto qb = q.value().block(g * group, h * dh, group, dh);
      auto kb = k.value().block(g * group, h * dh, group, dh);
      auto vb = v.value().block(g * group, h * dh, group, dh);
      Matrix a = softmax_rows_value((qb * kb.transpose()) * inv);
      out.block(g * group, h * dh, group, dh) = a * vb;
      attn[g * heads + h] = std::move(a);
    }
  return detail::make(std::move(out), {q, k, v}, [attn, heads, group, groups, dh, inv](Node& self) {
    auto& pq = self.parents[0];
    auto& pk = self.parents[1];
    auto& pv = self.parents[2];
    const Index rows = self.grad.rows();
    const Index cols = self.grad.cols();
    Matrix dq = Matrix::Zero(rows, cols), dk = Matrix::Zero(rows, cols), dv = Matrix::Zero(rows, cols);
    for (Index g = 0; g < groups; ++g)
      for (Index h = 0; h < heads; ++h) {
        const Matrix& a = attn[g * heads + h];
        auto go = self.grad.block(g * group, h * dh, group, dh);
        auto qb = pq->value.block(g * group, h * dh, group, dh);
        auto kb = pk->value.block(g * group, h * dh, group, dh);
        auto vb = pv->value.block(g * group, h * dh, group, dh);
        dv.block(g * group, h * dh, group, dh) = a.transpose() * go;
        Matrix da = go * vb.transpose();
        Vector rowdot = da.cwiseProduct(a).rowwise().sum();
        Matrix ds = a.cwiseProduct((da.colwise() - rowdot));
        ds *= inv;
        dq.block(g * group, h * dh, group, dh) = ds * kb;
        dk.block(g * group, h * dh, group, dh) = ds.transpose() * qb;
      }
    if (detail::wants(pq)) pq->accumulate(dq);
    if (detail::wants(pk)) pk->accumulate(dk);
    if (detail::wants(pv)) pv->accumulate(dv);
  });
}

// Inverted dropout; identity when p == 0.
inline Var dropout(const Var& x, double p, Rng& rng) {
  if (p <= 0) return x;
  require(p < 1, "dropout: probability must be below 1");
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return detail::make(x.value().cwiseProduct(mask), {x},
                      [mask](Node& self) { self.parents[0]->accumulate(self.grad.cwiseProduct(mask)); });
}

// ---------------------------------------------------------------------------
// Optimizer

// Adam with per-group learning rates. A group with lr == 0 is left untouched.
class Adam {
 public:
  struct Group {
    std::vector<Parameter*> params;
    double lr = 1e-3;
  };

  explicit Adam(std::vector<Group> groups, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : groups_(std::move(groups)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& g : groups_)
      for (const Parameter* p : g.params) {
        m_.emplace_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        v_.emplace_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      }
  }

  void zero_grad() {
    for (auto& g : groups_)
      for (Parameter* p : g.params) p->zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t slot = 0;
    for (auto& g : groups_)
      for (Parameter* p : g.params) {
        Matrix& m = m_[slot];
        Matrix& v = v_[slot];
        ++slot;
        if (g.lr == 0) continue;
        m = beta1_ * m + (1 - beta1_) * p->grad;
        v = beta2_ * v + (1 - beta2_) * p->grad.cwiseAbs2();
        p->value.array() -= g.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
      }
  }

  long steps() const { return t_; }

 private:
  std::vector<Group> groups_;
  std::vector<Matrix> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace brantx::ag
