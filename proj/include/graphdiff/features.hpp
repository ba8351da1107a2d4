#pragma once

#include <string>
#include <utility>
#include <vector>

#include "graphdiff/graph.hpp"

namespace graphdiff {

// Column-stochastic random-walk operator RW = A_bar D^-1. Columns of
// degree-0 nodes are all zero (pseudo-inverse convention), so the operator
// stays defined for the noisy intermediate graphs.
struct RandomWalkOperator {
  Eigen::MatrixXd rw;
  int steps = 0;
};

inline RandomWalkOperator random_walk_operator(const BinMat& a_bar, int steps) {
  const int n = static_cast<int>(a_bar.rows());
  const auto deg = degrees(a_bar);
  RandomWalkOperator op;
  op.steps = steps;
  op.rw = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    if (deg[j] == 0) continue;
    const double inv = 1.0 / deg[j];
    for (int i = 0; i < n; ++i)
      if (a_bar(i, j)) op.rw(i, j) = inv;
  }
  return op;
}

// Landing probabilities p[i][k-1] = (RW^k)_ii for k = 1..r.
inline Eigen::MatrixXd landing_probabilities(const RandomWalkOperator& op) {
  const int n = static_cast<int>(op.rw.rows());
  Eigen::MatrixXd p(n, op.steps);
  Eigen::MatrixXd power = op.rw;
  for (int k = 0; k < op.steps; ++k) {
    p.col(k) = power.diagonal();
    if (k + 1 < op.steps) power = (op.rw * power).eval();
  }
  return p;
}

// Shortest-path-distance classes from the walk operator's sparsity pattern:
// class k in {1..r} is the first power with (RW^k)_ij != 0, class r+1 marks
// pairs unreachable within r steps and the diagonal. Powers are taken on the
// boolean pattern, so small probabilities cannot underflow to a wrong class.
struct SpdFeature {
  Eigen::MatrixXi cls;
  int steps = 0;
};

inline SpdFeature spd_onehot(const RandomWalkOperator& op) {
  const int n = static_cast<int>(op.rw.rows());
  const int r = op.steps;
  SpdFeature f;
  f.steps = r;
  f.cls = Eigen::MatrixXi::Constant(n, n, r + 1);

  BinMat pattern = BinMat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) pattern(i, j) = op.rw(i, j) != 0.0 ? 1 : 0;

  BinMat reach = pattern;
  for (int k = 1; k <= r; ++k) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && reach(i, j) && f.cls(i, j) == r + 1) f.cls(i, j) = k;
    if (k == r) break;
    // next reachability: reach_{k+1} = 1[reach_k * pattern > 0]
    BinMat next = BinMat::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int m = 0; m < n; ++m) {
        if (!reach(i, m)) continue;
        for (int j = 0; j < n; ++j)
          if (pattern(m, j)) next(i, j) = 1;
      }
    reach = std::move(next);
  }
  return f;
}

// Row i is the onehot of min(deg(i), max_degree).
inline Eigen::MatrixXd degree_onehot(const BinMat& a_bar, int max_degree) {
  const int n = static_cast<int>(a_bar.rows());
  const auto deg = degrees(a_bar);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, max_degree + 1);
  for (int i = 0; i < n; ++i) h(i, std::min(deg[i], max_degree)) = 1.0;
  return h;
}

// Pairs (i, j), i < j, whose unit-rescaled value (A+1)/2 exceeds gamma.
// Symmetric closure is implied by the caller.
template <typename Scalar>
std::vector<std::pair<int, int>> edge_set(const MatX<Scalar>& a, double gamma,
                                          const NodeMask* mask = nullptr) {
  check_symmetric(a, "edge_set");
  std::vector<std::pair<int, int>> edges;
  const int n = static_cast<int>(a.rows());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (mask && (!(*mask)[i] || !(*mask)[j])) continue;
      if ((static_cast<double>(a(i, j)) + 1.0) / 2.0 > gamma) edges.emplace_back(i, j);
    }
  return edges;
}

}  // namespace graphdiff
