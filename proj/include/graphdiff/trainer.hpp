#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "graphdiff/pgsn.hpp"
#include "graphdiff/rng.hpp"
#include "graphdiff/sde.hpp"

namespace graphdiff {

enum class LambdaPolicy { sigma_squared, uniform };

struct TrainConfig {
  double learning_rate = 2e-5;
  double ema_momentum = 0.9999;
  int batch_size = 16;
  std::int64_t total_steps = 50000;
  double t_eps = 1e-5;
  LambdaPolicy lambda_policy = LambdaPolicy::sigma_squared;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_interval = 5000;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip_norm = 1.0;
  std::int64_t log_interval = 100;
  std::int64_t val_interval = 1000;
};

inline void validate_train_config(const TrainConfig& c) {
  if (!(c.ema_momentum >= 0.0 && c.ema_momentum <= 1.0))
    throw std::invalid_argument("train config: ema_momentum must lie in [0, 1]");
  if (!(c.learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
  if (!(c.t_eps > 0.0)) throw std::invalid_argument("train config: t_eps must be > 0");
  if (c.batch_size <= 0) throw std::invalid_argument("train config: batch_size must be > 0");
}

// Squared-residual DSM loss for one graph, averaged over the unmasked strict
// lower triangle. With the sigma^2 weighting this is mean((sigma s + eps)^2),
// which stays bounded near t_eps.
template <typename Scalar>
typename Tape<Scalar>::Var dsm_residual_on_tape(Tape<Scalar>& tape, typename Tape<Scalar>::Var score,
                                                const MatX<Scalar>& noise, double sigma,
                                                const NodeMask& mask, LambdaPolicy policy) {
  const int n = static_cast<int>(noise.rows());
  MatX<Scalar> lower = MatX<Scalar>::Zero(n, n);
  double count = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) {
      if (!mask.empty() && (!mask[i] || !mask[j])) continue;
      lower(i, j) = Scalar(1);
      count += 1.0;
    }
  if (count == 0.0) throw std::invalid_argument("dsm loss: no unmasked entries");

  typename Tape<Scalar>::Var resid;
  if (policy == LambdaPolicy::sigma_squared) {
    // sigma^2 (s - target)^2 == (sigma s + eps)^2
    resid = tape.add(tape.scale(score, static_cast<Scalar>(sigma)), tape.leaf(noise));
  } else {
    MatX<Scalar> target_neg = noise / static_cast<Scalar>(sigma);
    resid = tape.add(score, tape.leaf(target_neg));
  }
  auto masked_sq = tape.cmul(tape.leaf(lower), tape.cmul(resid, resid));
  return tape.scale(tape.sum_all(masked_sq), static_cast<Scalar>(1.0 / count));
}

// One graph's contribution to the batch loss; fills `grads` (aligned with
// params.tensors()) when a gradient pass is requested.
template <typename Scalar>
double dsm_loss_single(const GraphSample& g, PgsnParams<Scalar>& params,
                       const VpSdeSchedule& sched, const TrainConfig& tcfg, Rng& rng,
                       std::vector<MatX<Scalar>>* grads, double grad_weight) {
  const double t = rng.uniform(tcfg.t_eps, 1.0);
  MatX<Scalar> a0 = signed_adjacency<Scalar>(g);
  MatX<Scalar> noise = symmetric_normal<Scalar>(g.n, rng);
  auto state = perturb(a0, t, noise, sched);
  const double sigma = marginal_coeffs(sched, t).sigma;

  Tape<Scalar> tape(grads != nullptr);
  ParamVars<Scalar> bindings(tape);
  auto inputs = make_pgsn_inputs(state, params.cfg);
  auto score = pgsn_forward_on_tape(tape, inputs, params.cfg, params, &bindings);
  auto loss = dsm_residual_on_tape(tape, score, noise, sigma, state.node_mask, tcfg.lambda_policy);
  const double value = static_cast<double>(tape.val(loss)(0, 0));
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "dsm loss: non-finite loss at t = " << t;
    throw std::runtime_error(msg.str());
  }
  if (grads) {
    tape.backward(loss);
    auto tensors = params.tensors();
    for (size_t i = 0; i < tensors.size(); ++i)
      (*grads)[i] += bindings.grad_of(*tensors[i]) * static_cast<Scalar>(grad_weight);
  }
  return value;
}

// Batch-mean DSM objective; per graph samples t ~ U[t_eps, 1] and an
// independent symmetric noise draw.
template <typename Scalar>
double dsm_loss(const std::vector<GraphSample>& batch, PgsnParams<Scalar>& params,
                const VpSdeSchedule& sched, const TrainConfig& tcfg, Rng& rng,
                std::vector<MatX<Scalar>>* grads = nullptr) {
  if (batch.empty()) throw std::invalid_argument("dsm loss: empty batch");
  if (grads) {
    grads->clear();
    for (auto* m : params.tensors()) grads->push_back(MatX<Scalar>::Zero(m->rows(), m->cols()));
  }
  double total = 0.0;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& g : batch) total += w * dsm_loss_single(g, params, sched, tcfg, rng, grads, w);
  return total;
}

template <typename Scalar>
struct AdamState {
  std::vector<MatX<Scalar>> m, v;
  std::int64_t step = 0;

  static AdamState init_like(PgsnParams<Scalar>& params) {
    AdamState s;
    for (auto* t : params.tensors()) {
      s.m.push_back(MatX<Scalar>::Zero(t->rows(), t->cols()));
      s.v.push_back(MatX<Scalar>::Zero(t->rows(), t->cols()));
    }
    return s;
  }
};

template <typename Scalar>
std::vector<MatX<Scalar>> clone_tensors(PgsnParams<Scalar>& params) {
  std::vector<MatX<Scalar>> out;
  for (auto* t : params.tensors()) out.push_back(*t);
  return out;
}

// Parameters with the EMA weights swapped in (used for all sampling).
template <typename Scalar>
PgsnParams<Scalar> with_tensors(const PgsnParams<Scalar>& base,
                                const std::vector<MatX<Scalar>>& values) {
  PgsnParams<Scalar> out = base;
  auto tensors = out.tensors();
  if (tensors.size() != values.size())
    throw std::invalid_argument("with_tensors: tensor count mismatch");
  for (size_t i = 0; i < tensors.size(); ++i) *tensors[i] = values[i];
  return out;
}

struct StepOutcome {
  double loss = 0.0;
  bool skipped = false;
  double grad_norm = 0.0;
};

// One optimizer step: gradient clipping at a global norm, Adam update with
// bias correction, then the EMA shadow update. Non-finite gradients skip the
// step; `consecutive_skips` lets the caller abort after repeated failures.
template <typename Scalar>
StepOutcome train_step(PgsnParams<Scalar>& params, AdamState<Scalar>& adam,
                       std::vector<MatX<Scalar>>& ema, const std::vector<GraphSample>& batch,
                       const VpSdeSchedule& sched, const TrainConfig& tcfg, Rng& rng,
                       int& consecutive_skips) {
  std::vector<MatX<Scalar>> grads;
  StepOutcome out;
  out.loss = dsm_loss(batch, params, sched, tcfg, rng, &grads);

  double sq_norm = 0.0;
  bool finite = true;
  for (const auto& g : grads) {
    if (!g.allFinite()) {
      finite = false;
      break;
    }
    sq_norm += static_cast<double>(g.squaredNorm());
  }
  if (!finite) {
    out.skipped = true;
    if (++consecutive_skips >= 10)
      throw std::runtime_error("training aborted: 10 consecutive non-finite gradient steps");
    return out;
  }
  consecutive_skips = 0;
  out.grad_norm = std::sqrt(sq_norm);

  Scalar scale = Scalar(1);
  if (tcfg.grad_clip_norm > 0.0 && out.grad_norm > tcfg.grad_clip_norm)
    scale = static_cast<Scalar>(tcfg.grad_clip_norm / out.grad_norm);

  adam.step += 1;
  const double b1 = tcfg.adam_beta1, b2 = tcfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
  auto tensors = params.tensors();
  for (size_t i = 0; i < tensors.size(); ++i) {
    MatX<Scalar> g = grads[i] * scale;
    adam.m[i] = static_cast<Scalar>(b1) * adam.m[i] + static_cast<Scalar>(1.0 - b1) * g;
    adam.v[i] = static_cast<Scalar>(b2) * adam.v[i] +
                static_cast<Scalar>(1.0 - b2) * g.cwiseProduct(g);
    MatX<Scalar> m_hat = adam.m[i] / static_cast<Scalar>(bc1);
    MatX<Scalar> v_hat = adam.v[i] / static_cast<Scalar>(bc2);
    *tensors[i] -= static_cast<Scalar>(tcfg.learning_rate) *
                   (m_hat.array() / (v_hat.array().sqrt() + static_cast<Scalar>(tcfg.adam_eps)))
                       .matrix();
  }
  const Scalar m = static_cast<Scalar>(tcfg.ema_momentum);
  for (size_t i = 0; i < tensors.size(); ++i)
    ema[i] = m * ema[i] + (Scalar(1) - m) * (*tensors[i]);
  return out;
}

}  // namespace graphdiff
