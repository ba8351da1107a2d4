#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace graphdiff {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Binary adjacency matrix; entries are 0/1, zero diagonal.
using BinMat = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

using NodeMask = std::vector<std::uint8_t>;

// A simple undirected graph: no self-loops, no multi-edges.
struct GraphSample {
  int n = 0;
  BinMat adj;

  int num_edges() const {
    int e = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) e += adj(i, j);
    return e;
  }
};

inline bool is_simple_graph(const GraphSample& g) {
  if (g.adj.rows() != g.n || g.adj.cols() != g.n) return false;
  for (int i = 0; i < g.n; ++i) {
    if (g.adj(i, i) != 0) return false;
    for (int j = 0; j < g.n; ++j) {
      if (g.adj(i, j) > 1) return false;
      if (g.adj(i, j) != g.adj(j, i)) return false;
    }
  }
  return true;
}

inline void validate_graph(const GraphSample& g) {
  if (!is_simple_graph(g))
    throw std::invalid_argument("graph violates simple-graph invariants");
}

template <typename Scalar>
void check_symmetric(const MatX<Scalar>& a, const char* what) {
  if (a.rows() != a.cols()) throw std::invalid_argument(std::string(what) + ": not square");
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < i; ++j)
      if (a(i, j) != a(j, i))
        throw std::invalid_argument(std::string(what) + ": asymmetric input");
}

inline std::vector<int> degrees(const BinMat& adj) {
  std::vector<int> d(adj.rows(), 0);
  for (int i = 0; i < adj.rows(); ++i)
    for (int j = 0; j < adj.cols(); ++j) d[i] += adj(i, j);
  return d;
}

// Signed-scale adjacency: edges +1, non-edges -1, diagonal 0.
template <typename Scalar = double>
MatX<Scalar> signed_adjacency(const GraphSample& g) {
  MatX<Scalar> a(g.n, g.n);
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j)
      a(i, j) = (i == j) ? Scalar(0) : (g.adj(i, j) ? Scalar(1) : Scalar(-1));
  return a;
}

// Relabels nodes: out(perm[i], perm[j]) = in(i, j).
inline GraphSample permute_graph(const GraphSample& g, const std::vector<int>& perm) {
  GraphSample out;
  out.n = g.n;
  out.adj = BinMat::Zero(g.n, g.n);
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j) out.adj(perm[i], perm[j]) = g.adj(i, j);
  return out;
}

template <typename Scalar>
MatX<Scalar> permute_matrix(const MatX<Scalar>& m, const std::vector<int>& perm) {
  MatX<Scalar> out(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out(perm[i], perm[j]) = m(i, j);
  return out;
}

}  // namespace graphdiff
