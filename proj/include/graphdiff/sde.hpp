#pragma once

#include <cmath>
#include <stdexcept>

#include "graphdiff/graph.hpp"

namespace graphdiff {

// Variance-preserving forward SDE on adjacency matrices,
//   dA = -1/2 beta(t) A dt + sqrt(beta(t)) dW,   t in [0, 1],
// with a linear noise rate beta(t). Data lives in signed scale: edges +1,
// non-edges -1. The marginal at t=1 is (approximately) entrywise N(0, 1).
struct VpSdeSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  static constexpr double T = 1.0;
};

inline void validate_schedule(const VpSdeSchedule& s) {
  if (!(s.beta_min > 0.0 && s.beta_min < s.beta_max))
    throw std::invalid_argument("schedule requires 0 < beta_min < beta_max");
}

inline void check_time(double t) {
  if (!(t >= 0.0 && t <= VpSdeSchedule::T))
    throw std::domain_error("time outside [0, 1]");
}

inline double beta_at(const VpSdeSchedule& s, double t) {
  check_time(t);
  return s.beta_min + t * (s.beta_max - s.beta_min);
}

// Mean scaling alpha_t and noise std sigma_t of the Gaussian perturbation
// kernel p_0t(A_t | A_0) = N(alpha_t A_0, sigma_t^2 I).
struct PerturbKernelParams {
  double alpha = 1.0;
  double sigma = 0.0;
};

inline double beta_integral(const VpSdeSchedule& s, double t) {
  return s.beta_min * t + 0.5 * t * t * (s.beta_max - s.beta_min);
}

inline PerturbKernelParams marginal_coeffs(const VpSdeSchedule& s, double t) {
  check_time(t);
  const double alpha = std::exp(-0.5 * beta_integral(s, t));
  return {alpha, std::sqrt(1.0 - alpha * alpha)};
}

// Continuous state A paired with its quantized graph A_bar at time t.
template <typename Scalar>
struct DiffusionState {
  MatX<Scalar> A;
  BinMat A_bar;
  double t = 0.0;
  NodeMask node_mask;
};

// Threshold 0.5 in unit scale, i.e. an edge wherever (A+1)/2 > 0.5.
template <typename Scalar>
BinMat quantize(const MatX<Scalar>& a, const NodeMask* mask = nullptr) {
  const int n = static_cast<int>(a.rows());
  BinMat q = BinMat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (mask && (!(*mask)[i] || !(*mask)[j])) continue;
      q(i, j) = a(i, j) > Scalar(0) ? 1 : 0;
    }
  }
  return q;
}

// Closed-form sample of the perturbation kernel: A_t = alpha_t A_0 + sigma_t N
// with N a symmetric standard-normal matrix. No step-by-step simulation.
template <typename Scalar>
DiffusionState<Scalar> perturb(const MatX<Scalar>& a0, double t, const MatX<Scalar>& noise,
                               const VpSdeSchedule& sched, NodeMask mask = {}) {
  check_symmetric(a0, "perturb A0");
  check_symmetric(noise, "perturb noise");
  const auto mc = marginal_coeffs(sched, t);
  const int n = static_cast<int>(a0.rows());
  if (mask.empty()) mask.assign(n, 1);

  DiffusionState<Scalar> st;
  st.t = t;
  st.node_mask = mask;
  st.A = static_cast<Scalar>(mc.alpha) * a0 + static_cast<Scalar>(mc.sigma) * noise;
  for (int i = 0; i < n; ++i) {
    st.A(i, i) = Scalar(0);
    for (int j = 0; j < n; ++j)
      if (!mask[i] || !mask[j]) st.A(i, j) = Scalar(0);
  }
  st.A_bar = quantize(st.A, &st.node_mask);
  return st;
}

// Conditional score grad_A log p_0t(A_t | A_0) = -(A_t - alpha_t A_0) / sigma_t^2.
// Undefined at t = 0; training samples t >= t_eps.
template <typename Scalar>
MatX<Scalar> score_target(const MatX<Scalar>& a_t, const MatX<Scalar>& a0, double t,
                          const VpSdeSchedule& sched) {
  const auto mc = marginal_coeffs(sched, t);
  if (mc.sigma <= 0.0)
    throw std::domain_error("score_target singular at sigma_t = 0; sample t >= t_eps");
  const double inv_var = 1.0 / (mc.sigma * mc.sigma);
  return (-(a_t - static_cast<Scalar>(mc.alpha) * a0) * static_cast<Scalar>(inv_var)).eval();
}

// Drift of the reverse-time SDE, -1/2 beta(t) A - beta(t) score. The diffusion
// coefficient is state-independent, so no divergence correction appears.
template <typename Scalar>
MatX<Scalar> reverse_drift(const MatX<Scalar>& a, const MatX<Scalar>& score, double t,
                           const VpSdeSchedule& sched) {
  const double b = beta_at(sched, t);
  return (static_cast<Scalar>(-0.5 * b) * a - static_cast<Scalar>(b) * score).eval();
}

}  // namespace graphdiff
