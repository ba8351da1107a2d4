#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphdiff/rng.hpp"
#include "graphdiff/sde.hpp"

namespace graphdiff {

enum class SamplerMethod { em, pc, ode_fixed, ode_adaptive };

struct SamplerConfig {
  SamplerMethod method = SamplerMethod::pc;
  int num_steps = 1000;
  int corrector_steps_per_iter = 1;
  double snr_r = 0.16;
  double ode_step_size = 0.18;
  double ode_error_tol = 1e-2;
  double t_end = 1e-5;
  std::uint64_t seed = 0;
};

inline void validate_sampler_config(const SamplerConfig& c) {
  if (c.num_steps < 1) throw std::invalid_argument("sampler config: num_steps >= 1");
  if (!(c.snr_r > 0.0)) throw std::invalid_argument("sampler config: snr_r > 0");
  if (!(c.ode_step_size > 0.0 && c.ode_step_size <= 1.0))
    throw std::invalid_argument("sampler config: ode_step_size in (0, 1]");
  if (!(c.t_end >= 0.0)) throw std::invalid_argument("sampler config: t_end >= 0");
}

// Estimated score field at (A, quantize(A), t).
template <typename Scalar>
using ScoreFn = std::function<MatX<Scalar>(const MatX<Scalar>& a, const BinMat& a_bar, double t)>;

// Counts score-network calls; the efficiency currency of sampling.
struct NfeCounter {
  long long count = 0;
};

template <typename Scalar>
MatX<Scalar> eval_score(const ScoreFn<Scalar>& fn, const MatX<Scalar>& a, double t,
                        const NodeMask* mask, NfeCounter* nfe) {
  if (nfe) nfe->count += 1;
  return fn(a, quantize(a, mask), t);
}

// One reverse Euler-Maruyama step from t to t - dt:
//   A <- A + [1/2 beta(t) A + beta(t) s] dt + sqrt(beta(t) dt) z.
template <typename Scalar>
MatX<Scalar> em_step(const MatX<Scalar>& a, double t, double dt, const ScoreFn<Scalar>& score_fn,
                     const VpSdeSchedule& sched, Rng& rng, const NodeMask* mask = nullptr,
                     NfeCounter* nfe = nullptr) {
  if (dt < 0.0) throw std::invalid_argument("em_step: dt must be >= 0");
  if (dt == 0.0) return a;
  const double b = beta_at(sched, t);
  MatX<Scalar> s = eval_score(score_fn, a, t, mask, nfe);
  MatX<Scalar> z = symmetric_normal<Scalar>(static_cast<int>(a.rows()), rng, mask);
  MatX<Scalar> out = a + static_cast<Scalar>(dt) * (static_cast<Scalar>(0.5 * b) * a + static_cast<Scalar>(b) * s) +
                     static_cast<Scalar>(std::sqrt(b * dt)) * z;
  if (!out.allFinite()) throw std::runtime_error("em_step: non-finite state at t = " + std::to_string(t));
  return out;
}

// Langevin MCMC correction at fixed t. The step size follows the
// signal-to-noise rule eps = 2 (snr_r ||z|| / ||s||)^2; steps with a zero
// score norm are skipped (and counted for the caller's logs).
template <typename Scalar>
MatX<Scalar> langevin_correct(MatX<Scalar> a, double t, const ScoreFn<Scalar>& score_fn,
                              double snr_r, int steps, Rng& rng, const NodeMask* mask = nullptr,
                              NfeCounter* nfe = nullptr, int* skipped = nullptr) {
  for (int it = 0; it < steps; ++it) {
    MatX<Scalar> z = symmetric_normal<Scalar>(static_cast<int>(a.rows()), rng, mask);
    MatX<Scalar> s = eval_score(score_fn, a, t, mask, nfe);
    const double z_norm = std::sqrt(static_cast<double>(z.squaredNorm()));
    const double s_norm = std::sqrt(static_cast<double>(s.squaredNorm()));
    if (s_norm == 0.0) {
      if (skipped) ++*skipped;
      continue;
    }
    const double eps = 2.0 * std::pow(snr_r * z_norm / s_norm, 2.0);
    a += static_cast<Scalar>(eps) * s + static_cast<Scalar>(std::sqrt(2.0 * eps)) * z;
    if (!a.allFinite())
      throw std::runtime_error("langevin_correct: non-finite state at t = " + std::to_string(t));
  }
  return a;
}

template <typename Scalar>
MatX<Scalar> prior_sample(int n, Rng& rng, const NodeMask* mask = nullptr) {
  return symmetric_normal<Scalar>(n, rng, mask);
}

struct SampleResult {
  GraphSample graph;
  long long nfe = 0;
};

// Predictor-corrector sampling: Euler-Maruyama predictor alternating with
// Langevin correction on a uniform grid from t = 1 down to t_end.
template <typename Scalar>
SampleResult pc_sample(const ScoreFn<Scalar>& score_fn, int n, const SamplerConfig& cfg,
                       const VpSdeSchedule& sched, Rng& rng, const NodeMask* mask = nullptr) {
  validate_sampler_config(cfg);
  NfeCounter nfe;
  MatX<Scalar> a = prior_sample<Scalar>(n, rng, mask);
  const double dt = (1.0 - cfg.t_end) / cfg.num_steps;
  const bool correct = cfg.method == SamplerMethod::pc;
  for (int k = 0; k < cfg.num_steps; ++k) {
    const double t = 1.0 - k * dt;
    const double t_next = (k + 1 == cfg.num_steps) ? cfg.t_end : t - dt;
    a = em_step(a, t, dt, score_fn, sched, rng, mask, &nfe);
    if (correct)
      a = langevin_correct(a, t_next, score_fn, cfg.snr_r, cfg.corrector_steps_per_iter, rng,
                           mask, &nfe);
  }
  SampleResult res;
  res.nfe = nfe.count;
  res.graph.n = n;
  const BinMat q = quantize(a, mask);
  res.graph.adj = q;
  return res;
}

template <typename Scalar>
SampleResult em_sample(const ScoreFn<Scalar>& score_fn, int n, SamplerConfig cfg,
                       const VpSdeSchedule& sched, Rng& rng, const NodeMask* mask = nullptr) {
  cfg.method = SamplerMethod::em;
  return pc_sample(score_fn, n, cfg, sched, rng, mask);
}

// Right-hand side of the probability flow ODE,
//   dA/dt = -1/2 beta(t) A - 1/2 beta(t) s   (half the score weight of the SDE drift).
template <typename Scalar>
MatX<Scalar> ode_rhs(const MatX<Scalar>& a, double t, const ScoreFn<Scalar>& score_fn,
                     const VpSdeSchedule& sched, const NodeMask* mask = nullptr,
                     NfeCounter* nfe = nullptr) {
  const double b = beta_at(sched, t);
  MatX<Scalar> s = eval_score(score_fn, a, t, mask, nfe);
  return static_cast<Scalar>(-0.5 * b) * a - static_cast<Scalar>(0.5 * b) * s;
}

// Classical fixed-step RK4 from t = 1 down to t_end; the last step is
// truncated to land on t_end exactly. NFE is 4 per step.
template <typename Scalar>
MatX<Scalar> ode_integrate_fixed(const ScoreFn<Scalar>& score_fn, MatX<Scalar> a, double step_size,
                                 const VpSdeSchedule& sched, double t_end,
                                 const NodeMask* mask = nullptr, NfeCounter* nfe = nullptr) {
  if (!(step_size > 0.0)) throw std::invalid_argument("ode_integrate_fixed: step_size > 0");
  double t = 1.0;
  auto f = [&](const MatX<Scalar>& y, double tt) { return ode_rhs(y, tt, score_fn, sched, mask, nfe); };
  while (t > t_end + 1e-12) {
    const double h = std::min(step_size, t - t_end);
    MatX<Scalar> k1 = f(a, t);
    MatX<Scalar> k2 = f(a - static_cast<Scalar>(0.5 * h) * k1, t - 0.5 * h);
    MatX<Scalar> k3 = f(a - static_cast<Scalar>(0.5 * h) * k2, t - 0.5 * h);
    MatX<Scalar> k4 = f(a - static_cast<Scalar>(h) * k3, t - h);
    a -= static_cast<Scalar>(h / 6.0) * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
    t -= h;
    if (!a.allFinite())
      throw std::runtime_error("ode_integrate_fixed: non-finite state at t = " + std::to_string(t));
  }
  return a;
}

template <typename Scalar>
SampleResult ode_sample_fixed(const ScoreFn<Scalar>& score_fn, int n, double step_size,
                              const VpSdeSchedule& sched, Rng& rng, double t_end = 1e-5,
                              const NodeMask* mask = nullptr) {
  NfeCounter nfe;
  MatX<Scalar> a = ode_integrate_fixed(score_fn, prior_sample<Scalar>(n, rng, mask), step_size,
                                       sched, t_end, mask, &nfe);
  SampleResult res;
  res.nfe = nfe.count;
  res.graph.n = n;
  res.graph.adj = quantize(a, mask);
  return res;
}

// Dormand-Prince 5(4) adaptive solver with a PI step controller
// (safety 0.9) on a mixed absolute/relative error norm. Aborts if the step
// size underflows below 1e-6.
template <typename Scalar>
MatX<Scalar> ode_integrate_adaptive(const ScoreFn<Scalar>& score_fn, MatX<Scalar> a,
                                    double error_tol, const VpSdeSchedule& sched, double t_end,
                                    const NodeMask* mask = nullptr, NfeCounter* nfe = nullptr) {
  if (!(error_tol > 0.0)) throw std::invalid_argument("ode_integrate_adaptive: error_tol > 0");
  auto f = [&](const MatX<Scalar>& y, double tt) { return ode_rhs(y, tt, score_fn, sched, mask, nfe); };

  // Dormand-Prince coefficients
  static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                      a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                      a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                      b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b*: error estimate weights
  static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                      e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  double t = 1.0;
  double h = std::min(0.1, 1.0 - t_end);  // integrating backwards: step t -> t - h
  double err_prev = 1.0;
  const double atol = error_tol, rtol = error_tol;

  MatX<Scalar> k1 = f(a, t);
  while (t > t_end + 1e-12) {
    h = std::min(h, t - t_end);
    if (h < 1e-6) throw std::runtime_error("ode_integrate_adaptive: step size underflow");
    const double hs = -h;  // signed step
    MatX<Scalar> k2 = f(a + static_cast<Scalar>(hs * a21) * k1, t + hs * c2);
    MatX<Scalar> k3 = f(a + static_cast<Scalar>(hs * a31) * k1 + static_cast<Scalar>(hs * a32) * k2, t + hs * c3);
    MatX<Scalar> k4 = f(a + static_cast<Scalar>(hs * a41) * k1 + static_cast<Scalar>(hs * a42) * k2 +
                            static_cast<Scalar>(hs * a43) * k3,
                        t + hs * c4);
    MatX<Scalar> k5 = f(a + static_cast<Scalar>(hs * a51) * k1 + static_cast<Scalar>(hs * a52) * k2 +
                            static_cast<Scalar>(hs * a53) * k3 + static_cast<Scalar>(hs * a54) * k4,
                        t + hs * c5);
    MatX<Scalar> k6 = f(a + static_cast<Scalar>(hs * a61) * k1 + static_cast<Scalar>(hs * a62) * k2 +
                            static_cast<Scalar>(hs * a63) * k3 + static_cast<Scalar>(hs * a64) * k4 +
                            static_cast<Scalar>(hs * a65) * k5,
                        t + hs);
    MatX<Scalar> y_new = a + static_cast<Scalar>(hs * b1) * k1 + static_cast<Scalar>(hs * b3) * k3 +
                         static_cast<Scalar>(hs * b4) * k4 + static_cast<Scalar>(hs * b5) * k5 +
                         static_cast<Scalar>(hs * b6) * k6;
    MatX<Scalar> k7 = f(y_new, t + hs);
    MatX<Scalar> err_mat = static_cast<Scalar>(hs * e1) * k1 + static_cast<Scalar>(hs * e3) * k3 +
                           static_cast<Scalar>(hs * e4) * k4 + static_cast<Scalar>(hs * e5) * k5 +
                           static_cast<Scalar>(hs * e6) * k6 + static_cast<Scalar>(hs * e7) * k7;

    double err_sq = 0.0;
    for (int i = 0; i < err_mat.rows(); ++i)
      for (int j = 0; j < err_mat.cols(); ++j) {
        const double scale_ij =
            atol + rtol * std::max(std::abs(static_cast<double>(a(i, j))),
                                   std::abs(static_cast<double>(y_new(i, j))));
        const double e = static_cast<double>(err_mat(i, j)) / scale_ij;
        err_sq += e * e;
      }
    const double err = std::sqrt(err_sq / err_mat.size());

    if (err <= 1.0) {
      a = std::move(y_new);
      t -= h;
      k1 = std::move(k7);  // first-same-as-last
      if (!a.allFinite())
        throw std::runtime_error("ode_integrate_adaptive: non-finite state at t = " + std::to_string(t));
      const double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.7 / 5.0) * std::pow(err_prev, 0.4 / 5.0);
      h *= std::min(5.0, std::max(0.2, fac));
      err_prev = std::max(err, 1e-10);
    } else {
      const double fac = 0.9 * std::pow(err, -1.0 / 5.0);
      h *= std::min(1.0, std::max(0.2, fac));
    }
  }
  return a;
}

template <typename Scalar>
SampleResult ode_sample_adaptive(const ScoreFn<Scalar>& score_fn, int n, double error_tol,
                                 const VpSdeSchedule& sched, Rng& rng, double t_end = 1e-5,
                                 const NodeMask* mask = nullptr,
                                 const MatX<Scalar>* initial = nullptr) {
  NfeCounter nfe;
  MatX<Scalar> a0 = initial ? *initial : prior_sample<Scalar>(n, rng, mask);
  MatX<Scalar> a =
      ode_integrate_adaptive(score_fn, std::move(a0), error_tol, sched, t_end, mask, &nfe);
  SampleResult res;
  res.nfe = nfe.count;
  res.graph.n = n;
  res.graph.adj = quantize(a, mask);
  return res;
}

// Draw from an empirical node-count pmf by inverse CDF.
inline int sample_node_count(const std::vector<int>& support, const std::vector<double>& pmf,
                             Rng& rng) {
  if (support.empty() || support.size() != pmf.size())
    throw std::invalid_argument("sample_node_count: empty or inconsistent pmf");
  const double u = rng.uniform();
  double acc = 0.0;
  for (size_t k = 0; k < support.size(); ++k) {
    acc += pmf[k];
    if (u < acc) return support[k];
  }
  return support.back();
}

}  // namespace graphdiff
