#pragma once

#include <Eigen/Dense>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "graphdiff/graph.hpp"

namespace graphdiff {

// Reverse-mode autodiff over dense matrices, sized for the score network:
// a few hundred nodes per forward pass, one backward sweep per tape.
// Handles are indices into the tape; the tape must outlive its handles and
// is neither copyable nor movable (backward closures capture `this`).
template <typename Scalar>
class Tape {
 public:
  using Mat = MatX<Scalar>;

  struct Var {
    int id = -1;
  };

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Mat& val(Var v) const {
    const Node& n = nodes_[v.id];
    return n.external ? *n.external : n.storage;
  }

  // Gradient w.r.t. a node, valid after backward(). Zero matrix if the node
  // never received any adjoint.
  Mat grad_or_zero(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.size() == 0) return Mat::Zero(val(v).rows(), val(v).cols());
    return n.grad;
  }

  Var leaf(Mat value, bool requires_grad = false) {
    Node n;
    n.storage = std::move(value);
    n.needs_grad = requires_grad;
    return push(std::move(n));
  }

  // Leaf referencing caller-owned storage (parameters); avoids copying the
  // weights into every tape.
  Var leaf_ref(const Mat& value, bool requires_grad = true) {
    Node n;
    n.external = &value;
    n.needs_grad = requires_grad;
    return push(std::move(n));
  }

  Var matmul(Var a, Var b) {
    Mat out = val(a) * val(b);
    return unary_or_binary(std::move(out), a, b, [this, a, b](const Mat& g) {
      if (needs(a)) grad(a).noalias() += g * val(b).transpose();
      if (needs(b)) grad(b).noalias() += val(a).transpose() * g;
    });
  }

  Var add(Var a, Var b) {
    Mat out = val(a) + val(b);
    return unary_or_binary(std::move(out), a, b, [this, a, b](const Mat& g) {
      if (needs(a)) grad(a) += g;
      if (needs(b)) grad(b) += g;
    });
  }

  // Adds a 1 x c row vector to every row of a.
  Var add_rowvec(Var a, Var r) {
    Mat out = val(a).rowwise() + val(r).row(0);
    return unary_or_binary(std::move(out), a, r, [this, a, r](const Mat& g) {
      if (needs(a)) grad(a) += g;
      if (needs(r)) grad(r).row(0) += g.colwise().sum();
    });
  }

  Var scale(Var a, Scalar s) {
    Mat out = val(a) * s;
    return unary_or_binary(std::move(out), a, Var{-1}, [this, a, s](const Mat& g) {
      if (needs(a)) grad(a) += g * s;
    });
  }

  Var cmul(Var a, Var b) {
    Mat out = val(a).cwiseProduct(val(b));
    return unary_or_binary(std::move(out), a, b, [this, a, b](const Mat& g) {
      if (needs(a)) grad(a) += g.cwiseProduct(val(b));
      if (needs(b)) grad(b) += g.cwiseProduct(val(a));
    });
  }

  Var silu(Var a) {
    const Mat& x = val(a);
    Mat sig = x.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
    Mat out = x.cwiseProduct(sig);
    return unary_or_binary(std::move(out), a, Var{-1}, [this, a, sig](const Mat& g) {
      if (!needs(a)) return;
      const Mat& x = val(a);
      // d/dx x*s(x) = s(x) (1 + x (1 - s(x)))
      Mat d = (sig.array() * (1 + x.array() * (1 - sig.array()))).matrix();
      grad(a) += g.cwiseProduct(d);
    });
  }

  // Row-wise layer normalization with learned gain/bias (1 x d each).
  Var layernorm(Var x, Var gain, Var bias, Scalar eps = Scalar(1e-5)) {
    const Mat& xv = val(x);
    const int rows = static_cast<int>(xv.rows());
    const int d = static_cast<int>(xv.cols());
    Mat xhat(rows, d);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(rows);
    for (int i = 0; i < rows; ++i) {
      const Scalar mu = xv.row(i).mean();
      const Scalar var = (xv.row(i).array() - mu).square().mean();
      const Scalar inv = Scalar(1) / std::sqrt(var + eps);
      inv_std(i) = inv;
      xhat.row(i) = (xv.row(i).array() - mu) * inv;
    }
    Mat out = ((xhat.array().rowwise() * val(gain).row(0).array()).rowwise() +
               val(bias).row(0).array())
                  .matrix();
    Var o = alloc(std::move(out), needs(x) || needs(gain) || needs(bias));
    if (recording(o)) {
      push_back_fn(o, [this, x, gain, bias, o, xhat, inv_std]() {
        const Mat& g = grad_of(o);
        if (needs(gain)) grad(gain).row(0) += (g.cwiseProduct(xhat)).colwise().sum();
        if (needs(bias)) grad(bias).row(0) += g.colwise().sum();
        if (!needs(x)) return;
        const int d = static_cast<int>(xhat.cols());
        Mat dxhat = g.array().rowwise() * val(gain).row(0).array();
        for (int i = 0; i < xhat.rows(); ++i) {
          const Scalar s1 = dxhat.row(i).sum();
          const Scalar s2 = dxhat.row(i).cwiseProduct(xhat.row(i)).sum();
          grad(x).row(i) +=
              (inv_std(i) / d) *
              (Scalar(d) * dxhat.row(i).array() - s1 - xhat.row(i).array() * s2).matrix();
        }
      });
    }
    return o;
  }

  Var gather_rows(Var x, const std::vector<int>& idx) {
    const Mat& xv = val(x);
    Mat out(static_cast<int>(idx.size()), xv.cols());
    for (size_t r = 0; r < idx.size(); ++r) out.row(r) = xv.row(idx[r]);
    Var o = alloc(std::move(out), needs(x));
    if (recording(o)) {
      push_back_fn(o, [this, x, o, idx]() {
        const Mat& g = grad_of(o);
        for (size_t r = 0; r < idx.size(); ++r) grad(x).row(idx[r]) += g.row(r);
      });
    }
    return o;
  }

  // out.row(seg[r]) += x.row(r); result has num_segs rows.
  Var segment_sum(Var x, const std::vector<int>& seg, int num_segs) {
    const Mat& xv = val(x);
    Mat out = Mat::Zero(num_segs, xv.cols());
    for (size_t r = 0; r < seg.size(); ++r) out.row(seg[r]) += xv.row(r);
    Var o = alloc(std::move(out), needs(x));
    if (recording(o)) {
      push_back_fn(o, [this, x, o, seg]() {
        const Mat& g = grad_of(o);
        for (size_t r = 0; r < seg.size(); ++r) grad(x).row(r) += g.row(seg[r]);
      });
    }
    return o;
  }

  Var concat_cols(Var a, Var b) {
    const Mat& av = val(a);
    const Mat& bv = val(b);
    Mat out(av.rows(), av.cols() + bv.cols());
    out << av, bv;
    const int ca = static_cast<int>(av.cols());
    return unary_or_binary(std::move(out), a, b, [this, a, b, ca](const Mat& g) {
      if (needs(a)) grad(a) += g.leftCols(ca);
      if (needs(b)) grad(b) += g.rightCols(g.cols() - ca);
    });
  }

  // Per-head row dot product: out[r, k] = sum_{c in head k} a[r,c] b[r,c].
  Var head_dot(Var a, Var b, int heads) {
    const Mat& av = val(a);
    const Mat& bv = val(b);
    const int w = static_cast<int>(av.cols()) / heads;
    Mat out(av.rows(), heads);
    for (int k = 0; k < heads; ++k)
      out.col(k) =
          av.middleCols(k * w, w).cwiseProduct(bv.middleCols(k * w, w)).rowwise().sum();
    return unary_or_binary(std::move(out), a, b, [this, a, b, heads, w](const Mat& g) {
      for (int k = 0; k < heads; ++k) {
        if (needs(a))
          grad(a).middleCols(k * w, w) +=
              (val(b).middleCols(k * w, w).array().colwise() * g.col(k).array()).matrix();
        if (needs(b))
          grad(b).middleCols(k * w, w) +=
              (val(a).middleCols(k * w, w).array().colwise() * g.col(k).array()).matrix();
      }
    });
  }

  // Broadcast per-head coefficients over head chunks:
  // out[r, c] = x[r, c] * a[r, head(c)], where x has heads*w columns.
  Var mul_headwise(Var x, Var a, int heads) {
    const Mat& xv = val(x);
    const Mat& av = val(a);
    const int w = static_cast<int>(xv.cols()) / heads;
    Mat out(xv.rows(), xv.cols());
    for (int k = 0; k < heads; ++k)
      out.middleCols(k * w, w) =
          (xv.middleCols(k * w, w).array().colwise() * av.col(k).array()).matrix();
    return unary_or_binary(std::move(out), x, a, [this, x, a, heads, w](const Mat& g) {
      for (int k = 0; k < heads; ++k) {
        if (needs(x))
          grad(x).middleCols(k * w, w) +=
              (g.middleCols(k * w, w).array().colwise() * val(a).col(k).array()).matrix();
        if (needs(a))
          grad(a).col(k) +=
              g.middleCols(k * w, w).cwiseProduct(val(x).middleCols(k * w, w)).rowwise().sum();
      }
    });
  }

  // Per-head column means: out[r, k] = mean_{c in head k} x[r, c].
  Var head_mean(Var x, int heads) {
    const Mat& xv = val(x);
    const int w = static_cast<int>(xv.cols()) / heads;
    Mat out(xv.rows(), heads);
    for (int k = 0; k < heads; ++k) out.col(k) = xv.middleCols(k * w, w).rowwise().mean();
    return unary_or_binary(std::move(out), x, Var{-1}, [this, x, heads, w](const Mat& g) {
      if (!needs(x)) return;
      for (int k = 0; k < heads; ++k)
        grad(x).middleCols(k * w, w).colwise() += g.col(k) / Scalar(w);
    });
  }

  // Sums the head chunks of x (heads*w columns) down to w columns.
  Var sum_headchunks(Var x, int heads) {
    const Mat& xv = val(x);
    const int w = static_cast<int>(xv.cols()) / heads;
    Mat out = Mat::Zero(xv.rows(), w);
    for (int k = 0; k < heads; ++k) out += xv.middleCols(k * w, w);
    return unary_or_binary(std::move(out), x, Var{-1}, [this, x, heads, w](const Mat& g) {
      if (!needs(x)) return;
      for (int k = 0; k < heads; ++k) grad(x).middleCols(k * w, w) += g;
    });
  }

  // Softmax of logits (m x H) over rows sharing a segment id, restricted to
  // rows with mask != 0. Masked rows get zero; an all-masked segment yields
  // zeros (softmax over an empty neighborhood).
  Var segment_softmax(Var logits, const std::vector<int>& seg, const std::vector<std::uint8_t>& mask,
                      int num_segs) {
    const Mat& lv = val(logits);
    const int m = static_cast<int>(lv.rows());
    const int h = static_cast<int>(lv.cols());
    Mat mx = Mat::Constant(num_segs, h, -std::numeric_limits<Scalar>::infinity());
    for (int r = 0; r < m; ++r)
      if (mask[r]) mx.row(seg[r]) = mx.row(seg[r]).cwiseMax(lv.row(r));
    Mat out = Mat::Zero(m, h);
    Mat z = Mat::Zero(num_segs, h);
    for (int r = 0; r < m; ++r) {
      if (!mask[r]) continue;
      out.row(r) = (lv.row(r) - mx.row(seg[r])).array().exp();
      z.row(seg[r]) += out.row(r);
    }
    for (int r = 0; r < m; ++r) {
      if (!mask[r]) continue;
      for (int k = 0; k < h; ++k) out(r, k) = z(seg[r], k) > Scalar(0) ? out(r, k) / z(seg[r], k) : Scalar(0);
    }
    Var o = alloc(std::move(out), needs(logits));
    if (recording(o)) {
      push_back_fn(o, [this, logits, o, seg, mask, num_segs]() {
        const Mat& g = grad_of(o);
        const Mat& a = val(o);
        Mat dot = Mat::Zero(num_segs, a.cols());
        for (int r = 0; r < a.rows(); ++r)
          if (mask[r]) dot.row(seg[r]) += g.row(r).cwiseProduct(a.row(r));
        for (int r = 0; r < a.rows(); ++r)
          if (mask[r])
            grad(logits).row(r) += a.row(r).cwiseProduct(g.row(r) - dot.row(seg[r]));
      });
    }
    return o;
  }

  Var transpose(Var a) {
    Mat out = val(a).transpose();
    return unary_or_binary(std::move(out), a, Var{-1}, [this, a](const Mat& g) {
      if (needs(a)) grad(a) += g.transpose();
    });
  }

  // Column vector of length n*n (row-major pair order) to an n x n matrix.
  Var pairs_to_square(Var x, int n) {
    const Mat& xv = val(x);
    Mat out(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out(i, j) = xv(i * n + j, 0);
    return unary_or_binary(std::move(out), x, Var{-1}, [this, x, n](const Mat& g) {
      if (!needs(x)) return;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) grad(x)(i * n + j, 0) += g(i, j);
    });
  }

  Var sum_all(Var a) {
    Mat out(1, 1);
    out(0, 0) = val(a).sum();
    return unary_or_binary(std::move(out), a, Var{-1}, [this, a](const Mat& g) {
      if (needs(a)) grad(a).array() += g(0, 0);
    });
  }

  // Convenience: x W + b with b a 1 x d row vector.
  Var linear(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

  bool grad_enabled() const { return grad_enabled_; }

  void backward(Var loss) {
    if (!grad_enabled_) throw std::logic_error("backward on a no-grad tape");
    const Mat& lv = val(loss);
    if (lv.rows() != 1 || lv.cols() != 1) throw std::logic_error("backward expects a scalar");
    grad(loss) = Mat::Ones(1, 1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward && n.grad.size() != 0) n.backward();
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat storage;
    const Mat* external = nullptr;
    Mat grad;
    std::function<void()> backward;
    bool needs_grad = false;
  };

  bool needs(Var v) const { return v.id >= 0 && nodes_[v.id].needs_grad; }
  bool recording(Var out) const { return grad_enabled_ && nodes_[out.id].needs_grad; }

  Mat& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(val(v).rows(), val(v).cols());
    return n.grad;
  }

  const Mat& grad_of(Var v) { return grad(v); }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var alloc(Mat out, bool needs_grad) {
    Node n;
    n.storage = std::move(out);
    n.needs_grad = grad_enabled_ && needs_grad;
    return push(std::move(n));
  }

  void push_back_fn(Var out, std::function<void()> fn) { nodes_[out.id].backward = std::move(fn); }

  template <typename Fn>
  Var unary_or_binary(Mat out, Var a, Var b, Fn&& fn) {
    Var o = alloc(std::move(out), needs(a) || needs(b));
    if (recording(o)) {
      push_back_fn(o, [this, o, fn = std::forward<Fn>(fn)]() { fn(grad_of(o)); });
    }
    return o;
  }

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

}  // namespace graphdiff
