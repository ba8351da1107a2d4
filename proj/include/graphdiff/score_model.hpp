#pragma once

#include "graphdiff/pgsn.hpp"
#include "graphdiff/samplers.hpp"

namespace graphdiff {

// Wraps a parameter set (typically the EMA weights) as the score field used
// by the reverse-time samplers. Parameters are captured by value so the
// returned callable owns everything it needs; inference is read-only.
template <typename Scalar>
ScoreFn<Scalar> make_score_fn(PgsnConfig cfg, PgsnParams<Scalar> params, NodeMask mask = {}) {
  return [cfg, params = std::move(params), mask](const MatX<Scalar>& a, const BinMat& a_bar,
                                                 double t) -> MatX<Scalar> {
    DiffusionState<Scalar> state;
    state.A = a;
    state.A_bar = a_bar;
    state.t = t;
    state.node_mask = mask.empty() ? NodeMask(a.rows(), 1) : mask;
    return pgsn_forward(state, cfg, params);
  };
}

}  // namespace graphdiff
