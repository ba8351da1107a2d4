#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphdiff/graph.hpp"

namespace graphdiff {

enum class DescriptorKind { degree, clustering, spectrum };

// Normalized histogram of one structure descriptor; compared as probability
// vectors so sets with different graph sizes stay comparable.
struct DescriptorHistogram {
  DescriptorKind kind = DescriptorKind::degree;
  Eigen::VectorXd values;
};

inline DescriptorHistogram degree_descriptor(const GraphSample& g, int max_degree_bound) {
  DescriptorHistogram h;
  h.kind = DescriptorKind::degree;
  h.values = Eigen::VectorXd::Zero(max_degree_bound + 1);
  const auto deg = degrees(g.adj);
  for (int i = 0; i < g.n; ++i) h.values(std::min(deg[i], max_degree_bound)) += 1.0;
  if (g.n > 0) h.values /= static_cast<double>(g.n);
  return h;
}

// Local clustering coefficients (triangles over wedges, 0 for degree < 2)
// histogrammed into 100 bins on [0, 1].
inline DescriptorHistogram clustering_descriptor(const GraphSample& g, int bins = 100) {
  DescriptorHistogram h;
  h.kind = DescriptorKind::clustering;
  h.values = Eigen::VectorXd::Zero(bins);
  const auto deg = degrees(g.adj);
  for (int i = 0; i < g.n; ++i) {
    double c = 0.0;
    if (deg[i] >= 2) {
      int tri = 0;
      for (int u = 0; u < g.n; ++u) {
        if (!g.adj(i, u)) continue;
        for (int v = u + 1; v < g.n; ++v)
          if (g.adj(i, v) && g.adj(u, v)) ++tri;
      }
      c = 2.0 * tri / (static_cast<double>(deg[i]) * (deg[i] - 1));
    }
    const int b = std::min(static_cast<int>(c * bins), bins - 1);
    h.values(b) += 1.0;
  }
  if (g.n > 0) h.values /= static_cast<double>(g.n);
  return h;
}

// Eigenvalues of the symmetric normalized Laplacian I - D^-1/2 A D^-1/2,
// with D^-1/2 = 0 on isolated nodes, histogrammed into 200 bins on [0, 2].
inline Eigen::VectorXd normalized_laplacian_eigenvalues(const GraphSample& g) {
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(g.n, g.n);
  const auto deg = degrees(g.adj);
  std::vector<double> dinv(g.n, 0.0);
  for (int i = 0; i < g.n; ++i)
    if (deg[i] > 0) dinv[i] = 1.0 / std::sqrt(static_cast<double>(deg[i]));
  for (int i = 0; i < g.n; ++i) {
    lap(i, i) = deg[i] > 0 ? 1.0 : 0.0;
    for (int j = 0; j < g.n; ++j)
      if (g.adj(i, j)) lap(i, j) -= dinv[i] * dinv[j];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

inline DescriptorHistogram spectrum_descriptor(const GraphSample& g, int bins = 200) {
  DescriptorHistogram h;
  h.kind = DescriptorKind::spectrum;
  h.values = Eigen::VectorXd::Zero(bins);
  const auto ev = normalized_laplacian_eigenvalues(g);
  for (int k = 0; k < ev.size(); ++k) {
    const double x = std::clamp(ev(k), 0.0, 2.0);
    const int b = std::min(static_cast<int>(x / 2.0 * bins), bins - 1);
    h.values(b) += 1.0;
  }
  if (ev.size() > 0) h.values /= static_cast<double>(ev.size());
  return h;
}

inline double rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double sigma) {
  if (sigma <= 0.0) throw std::invalid_argument("rbf_kernel: sigma must be > 0");
  if (x.size() != y.size()) throw std::invalid_argument("rbf_kernel: size mismatch");
  return std::exp(-(x - y).squaredNorm() / (2.0 * sigma * sigma));
}

// Biased MMD^2 estimator, diagonal terms included:
//   1/m^2 sum k(t,t') + 1/n^2 sum k(g,g') - 2/(nm) sum k(g,t).
template <typename Kernel>
double mmd_biased(const std::vector<Eigen::VectorXd>& set_g,
                  const std::vector<Eigen::VectorXd>& set_t, Kernel&& kernel) {
  if (set_g.empty() || set_t.empty()) throw std::invalid_argument("mmd_biased: empty set");
  const double n = static_cast<double>(set_g.size());
  const double m = static_cast<double>(set_t.size());
  double k_tt = 0.0, k_gg = 0.0, k_gt = 0.0;
  for (const auto& a : set_t)
    for (const auto& b : set_t) k_tt += kernel(a, b);
  for (const auto& a : set_g)
    for (const auto& b : set_g) k_gg += kernel(a, b);
  for (const auto& a : set_g)
    for (const auto& b : set_t) k_gt += kernel(a, b);
  return k_tt / (m * m) + k_gg / (n * n) - 2.0 * k_gt / (n * m);
}

// 50 candidate sigmas spaced log-uniformly over [1e-5, 1e5].
inline std::vector<double> sigma_grid(int count = 50, double lo = 1e-5, double hi = 1e5) {
  std::vector<double> s(count);
  for (int i = 0; i < count; ++i)
    s[i] = std::pow(10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) * i / (count - 1));
  return s;
}

struct MmdAtSigma {
  double mmd = 0.0;
  double sigma = 0.0;
};

// Max-over-sigma protocol: evaluates the RBF MMD across the sigma grid and
// reports the largest value (the most discriminating kernel width).
inline MmdAtSigma mmd_max_over_sigma(const std::vector<Eigen::VectorXd>& set_g,
                                     const std::vector<Eigen::VectorXd>& set_t) {
  if (set_g.empty() || set_t.empty()) throw std::invalid_argument("mmd_max_over_sigma: empty set");
  // precompute squared distances once; the sigma sweep only re-exponentiates
  const size_t n = set_g.size(), m = set_t.size();
  Eigen::MatrixXd d_gg(n, n), d_tt(m, m), d_gt(n, m);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) d_gg(i, j) = (set_g[i] - set_g[j]).squaredNorm();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < m; ++j) d_tt(i, j) = (set_t[i] - set_t[j]).squaredNorm();
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < m; ++j) d_gt(i, j) = (set_g[i] - set_t[j]).squaredNorm();

  MmdAtSigma best{-std::numeric_limits<double>::infinity(), 0.0};
  for (double sigma : sigma_grid()) {
    const double inv = 1.0 / (2.0 * sigma * sigma);
    const double v = (-d_tt * inv).array().exp().sum() / (double(m) * m) +
                     (-d_gg * inv).array().exp().sum() / (double(n) * n) -
                     2.0 * (-d_gt * inv).array().exp().sum() / (double(n) * m);
    if (v > best.mmd) best = {v, sigma};
  }
  return best;
}

// Maximum-likelihood edge probability over a training set.
inline double er_baseline(const std::vector<GraphSample>& train) {
  if (train.empty()) throw std::invalid_argument("er_baseline: empty training set");
  double edges = 0.0, pairs = 0.0;
  for (const auto& g : train) {
    edges += g.num_edges();
    pairs += static_cast<double>(g.n) * (g.n - 1) / 2.0;
  }
  return pairs > 0.0 ? edges / pairs : 0.0;
}

struct MmdReport {
  MmdAtSigma degree, clustering, spectrum;
  double average = 0.0;
  MmdAtSigma ref_degree, ref_clustering, ref_spectrum;
  double ref_average = 0.0;
};

namespace detail {

inline int max_degree_over(const std::vector<const std::vector<GraphSample>*>& sets) {
  int md = 0;
  for (const auto* s : sets)
    for (const auto& g : *s)
      for (int d : degrees(g.adj)) md = std::max(md, d);
  return md;
}

inline std::vector<Eigen::VectorXd> descriptor_set(const std::vector<GraphSample>& graphs,
                                                   DescriptorKind kind, int max_degree_bound) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) {
    switch (kind) {
      case DescriptorKind::degree: out.push_back(degree_descriptor(g, max_degree_bound).values); break;
      case DescriptorKind::clustering: out.push_back(clustering_descriptor(g).values); break;
      case DescriptorKind::spectrum: out.push_back(spectrum_descriptor(g).values); break;
    }
  }
  return out;
}

}  // namespace detail

// Max-over-sigma MMD of generated-vs-test per descriptor, with the
// train-vs-test values as a reference bound. Degree histograms share one
// support across all three sets.
inline MmdReport evaluate(const std::vector<GraphSample>& generated,
                          const std::vector<GraphSample>& test,
                          const std::vector<GraphSample>& train) {
  if (generated.empty() || test.empty() || train.empty())
    throw std::invalid_argument("evaluate: all sets must be non-empty");
  const int md = detail::max_degree_over({&generated, &test, &train});

  MmdReport r;
  for (auto kind : {DescriptorKind::degree, DescriptorKind::clustering, DescriptorKind::spectrum}) {
    auto gen_h = detail::descriptor_set(generated, kind, md);
    auto test_h = detail::descriptor_set(test, kind, md);
    auto train_h = detail::descriptor_set(train, kind, md);
    const auto gen_vs_test = mmd_max_over_sigma(gen_h, test_h);
    const auto train_vs_test = mmd_max_over_sigma(train_h, test_h);
    switch (kind) {
      case DescriptorKind::degree: r.degree = gen_vs_test; r.ref_degree = train_vs_test; break;
      case DescriptorKind::clustering: r.clustering = gen_vs_test; r.ref_clustering = train_vs_test; break;
      case DescriptorKind::spectrum: r.spectrum = gen_vs_test; r.ref_spectrum = train_vs_test; break;
    }
  }
  r.average = (r.degree.mmd + r.clustering.mmd + r.spectrum.mmd) / 3.0;
  r.ref_average = (r.ref_degree.mmd + r.ref_clustering.mmd + r.ref_spectrum.mmd) / 3.0;
  return r;
}

}  // namespace graphdiff
