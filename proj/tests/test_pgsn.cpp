#include "graphdiff/pgsn.hpp"

#include <gtest/gtest.h>

#include "graphdiff/rng.hpp"
#include "graphdiff/trainer.hpp"

using namespace graphdiff;

namespace {

PgsnConfig small_config() {
  PgsnConfig cfg;
  cfg.hidden_dim = 32;
  cfg.num_layers = 2;
  cfg.num_heads = 4;
  cfg.rw_steps = 8;
  cfg.time_embed_dim = 32;
  cfg.max_nodes = 20;
  return cfg;
}

template <typename Scalar>
DiffusionState<Scalar> random_state(int n, double t, Rng& rng, const VpSdeSchedule& sched,
                                    double edge_p = 0.4) {
  GraphSample g;
  g.n = n;
  g.adj = BinMat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.bernoulli(edge_p)) {
        g.adj(i, j) = 1;
        g.adj(j, i) = 1;
      }
  const auto a0 = signed_adjacency<Scalar>(g);
  const auto noise = symmetric_normal<Scalar>(n, rng);
  return perturb(a0, t, noise, sched);
}

}  // namespace

TEST(PgsnConfigTest, Validation) {
  PgsnConfig bad = small_config();
  bad.hidden_dim = 30;  // not divisible by 4 heads
  EXPECT_THROW(validate_config(bad), std::invalid_argument);
  bad = small_config();
  bad.num_layers = 0;
  EXPECT_THROW(validate_config(bad), std::invalid_argument);
  EXPECT_NO_THROW(validate_config(small_config()));
}

TEST(TimeEmbedding, DeterministicDistinctAndSized) {
  const auto e1 = time_embedding<double>(0.37, 64);
  const auto e2 = time_embedding<double>(0.37, 64);
  EXPECT_EQ(e1.cols(), 64);
  EXPECT_DOUBLE_EQ((e1 - e2).cwiseAbs().maxCoeff(), 0.0);
  const auto e0 = time_embedding<double>(0.0, 64);
  const auto eT = time_embedding<double>(1.0, 64);
  EXPECT_GT((e0 - eT).norm(), 0.0);
  EXPECT_THROW(time_embedding<double>(0.5, 31), std::invalid_argument);
}

TEST(Pgsn, OutputShapeSymmetryZeroDiagonal) {
  Rng rng(3);
  const auto cfg = small_config();
  auto params = init_params<float>(cfg, rng);
  VpSdeSchedule sched;
  auto state = random_state<float>(9, 0.5, rng, sched);
  const auto s = pgsn_forward(state, cfg, params);
  ASSERT_EQ(s.rows(), 9);
  ASSERT_EQ(s.cols(), 9);
  for (int i = 0; i < 9; ++i) {
    EXPECT_EQ(s(i, i), 0.0f);
    for (int j = 0; j < 9; ++j) EXPECT_EQ(s(i, j), s(j, i));
  }
  EXPECT_TRUE(s.allFinite());
}

TEST(Pgsn, ZeroInitializedHeadGivesZeroScore) {
  Rng rng(4);
  const auto cfg = small_config();
  const auto params = init_params<float>(cfg, rng);
  VpSdeSchedule sched;
  auto state = random_state<float>(7, 0.8, rng, sched);
  EXPECT_EQ(pgsn_forward(state, cfg, params).cwiseAbs().maxCoeff(), 0.0f);
}

TEST(Pgsn, DeterministicForward) {
  Rng rng(5);
  const auto cfg = small_config();
  auto params = init_params<float>(cfg, rng);
  // nudge the head off zero so the output is non-trivial
  Rng prng(55);
  params.w_h3 = detail::fanin_normal<float>(cfg.hidden_dim, 1, prng);
  VpSdeSchedule sched;
  auto state = random_state<float>(8, 0.4, rng, sched);
  const auto s1 = pgsn_forward(state, cfg, params);
  const auto s2 = pgsn_forward(state, cfg, params);
  EXPECT_EQ((s1 - s2).cwiseAbs().maxCoeff(), 0.0f);  // bit-identical
  EXPECT_GT(s1.cwiseAbs().maxCoeff(), 0.0f);
}

TEST(Pgsn, PermutationEquivariance100Triples) {
  Rng rng(6);
  const auto cfg = small_config();
  auto params = init_params<float>(cfg, rng);
  Rng prng(66);
  params.w_h3 = detail::fanin_normal<float>(cfg.hidden_dim, 1, prng);
  VpSdeSchedule sched;

  float worst = 0.0f;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 4 + static_cast<int>(rng.below(17));  // n <= 20
    const double t = rng.uniform(0.02, 1.0);
    auto state = random_state<float>(n, t, rng, sched);
    const auto perm = rng.permutation(n);

    DiffusionState<float> pstate;
    pstate.t = state.t;
    pstate.node_mask = NodeMask(n, 1);
    pstate.A = permute_matrix<float>(state.A, perm);
    pstate.A_bar = quantize(pstate.A, &pstate.node_mask);

    const auto s = pgsn_forward(state, cfg, params);
    const auto sp = pgsn_forward(pstate, cfg, params);
    const auto s_perm = permute_matrix<float>(s, perm);
    worst = std::max(worst, (sp - s_perm).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-4f);
}

TEST(Pgsn, MaskedNodesContributeNothing) {
  Rng rng(7);
  const auto cfg = small_config();
  auto params = init_params<float>(cfg, rng);
  Rng prng(77);
  params.w_h3 = detail::fanin_normal<float>(cfg.hidden_dim, 1, prng);
  VpSdeSchedule sched;

  // a 6-node graph and the same graph padded to 9 with masked slots
  Rng data_rng(70);
  GraphSample g;
  g.n = 6;
  g.adj = BinMat::Zero(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j)
      if (data_rng.bernoulli(0.5)) {
        g.adj(i, j) = 1;
        g.adj(j, i) = 1;
      }
  const double t = 0.3;
  Rng noise_rng(71);
  const auto noise6 = symmetric_normal<float>(6, noise_rng);
  auto state6 = perturb(signed_adjacency<float>(g), t, noise6, sched);

  DiffusionState<float> state9;
  state9.t = t;
  state9.node_mask = NodeMask(9, 0);
  for (int i = 0; i < 6; ++i) state9.node_mask[i] = 1;
  state9.A = MatX<float>::Zero(9, 9);
  state9.A.topLeftCorner(6, 6) = state6.A;
  state9.A_bar = quantize(state9.A, &state9.node_mask);

  const auto s6 = pgsn_forward(state6, cfg, params);
  const auto s9 = pgsn_forward(state9, cfg, params);
  EXPECT_LE((s9.topLeftCorner(6, 6) - s6).cwiseAbs().maxCoeff(), 1e-5f);
  for (int i = 0; i < 9; ++i)
    for (int j = 6; j < 9; ++j) {
      EXPECT_EQ(s9(i, j), 0.0f);
      EXPECT_EQ(s9(j, i), 0.0f);
    }
}

TEST(Pgsn, SingleEdgeAttentionIsSoftmaxOfSingleton) {
  // n = 2 with one edge: each node's neighborhood is a single pair, so the
  // attention weight must be exactly 1. Probe via the segment softmax the
  // forward uses on this plan.
  VpSdeSchedule sched;
  Rng rng(8);
  GraphSample g;
  g.n = 2;
  g.adj = BinMat::Zero(2, 2);
  g.adj(0, 1) = g.adj(1, 0) = 1;
  auto state = perturb(signed_adjacency<float>(g), 0.0, MatX<float>::Zero(2, 2).eval(), sched);
  const auto plan = make_pair_plan(state, 0.2);
  EXPECT_EQ(plan.attn_mask[0 * 2 + 1], 1);
  EXPECT_EQ(plan.attn_mask[1 * 2 + 0], 1);
  EXPECT_EQ(plan.attn_mask[0], 0);  // diagonal

  Tape<float> tape;
  auto logits = tape.leaf(MatX<float>::Random(4, 2).eval());
  auto alpha = tape.segment_softmax(logits, plan.src, plan.attn_mask, 2);
  EXPECT_NEAR(tape.val(alpha)(0 * 2 + 1, 0), 1.0f, 1e-6f);
  EXPECT_NEAR(tape.val(alpha)(1 * 2 + 0, 1), 1.0f, 1e-6f);
}

TEST(Pgsn, EdgeFeaturesStaySymmetric) {
  // e'_{ij} = e'_{ji} when inputs are symmetric; the raw head output is then
  // symmetric before explicit symmetrization, so forward == its transpose.
  Rng rng(9);
  const auto cfg = small_config();
  auto params = init_params<float>(cfg, rng);
  Rng prng(99);
  params.w_h3 = detail::fanin_normal<float>(cfg.hidden_dim, 1, prng);
  VpSdeSchedule sched;
  auto state = random_state<float>(10, 0.6, rng, sched);
  const auto s = pgsn_forward(state, cfg, params);
  EXPECT_EQ((s - s.transpose().eval()).cwiseAbs().maxCoeff(), 0.0f);
}

// Directional-derivative check of the DSM loss against central finite
// differences, on a 5-node instance in 64-bit arithmetic.
TEST(Pgsn, GradientMatchesFiniteDifferences) {
  PgsnConfig cfg = small_config();
  cfg.hidden_dim = 16;
  cfg.num_heads = 2;
  cfg.num_layers = 2;
  cfg.rw_steps = 4;
  cfg.time_embed_dim = 8;
  cfg.max_nodes = 5;
  Rng rng(10);
  auto params = init_params<double>(cfg, rng);
  Rng prng(100);
  params.w_h3 = detail::fanin_normal<double>(cfg.hidden_dim, 1, prng);

  GraphSample g;
  g.n = 5;
  g.adj = BinMat::Zero(5, 5);
  for (auto [i, j] : std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}}) {
    g.adj(i, j) = 1;
    g.adj(j, i) = 1;
  }

  VpSdeSchedule sched;
  TrainConfig tcfg;
  tcfg.lambda_policy = LambdaPolicy::sigma_squared;

  auto loss_at = [&](PgsnParams<double>& p) {
    Rng lrng(1234);  // identical draws for every evaluation
    std::vector<GraphSample> batch = {g};
    return dsm_loss(batch, p, sched, tcfg, lrng);
  };

  std::vector<MatX<double>> grads;
  {
    Rng lrng(1234);
    std::vector<GraphSample> batch = {g};
    dsm_loss(batch, params, sched, tcfg, lrng, &grads);
  }

  // random directions over the full parameter vector
  Rng dir_rng(11);
  auto tensors = params.tensors();
  for (int probe = 0; probe < 6; ++probe) {
    std::vector<MatX<double>> dir;
    double analytic = 0.0;
    for (size_t k = 0; k < tensors.size(); ++k) {
      MatX<double> d(tensors[k]->rows(), tensors[k]->cols());
      for (int i = 0; i < d.rows(); ++i)
        for (int j = 0; j < d.cols(); ++j) d(i, j) = dir_rng.normal();
      d /= std::sqrt(static_cast<double>(d.size()));
      dir.push_back(d);
      analytic += grads[k].cwiseProduct(d).sum();
    }
    const double eps = 1e-5;
    auto shifted = [&](double sgn) {
      PgsnParams<double> p = params;
      auto pt = p.tensors();
      for (size_t k = 0; k < pt.size(); ++k) *pt[k] += sgn * eps * dir[k];
      return loss_at(p);
    };
    const double fd = (shifted(+1.0) - shifted(-1.0)) / (2 * eps);
    EXPECT_NEAR(analytic, fd, 1e-3 * std::max(1.0, std::abs(fd))) << "probe " << probe;
  }
}

TEST(Pgsn, FeatureExtractionCommutesWithPermutation) {
  Rng rng(12);
  VpSdeSchedule sched;
  const auto cfg = small_config();
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 5 + static_cast<int>(rng.below(10));
    auto state = random_state<float>(n, rng.uniform(0.1, 0.9), rng, sched);
    const auto perm = rng.permutation(n);
    DiffusionState<float> pstate;
    pstate.t = state.t;
    pstate.node_mask = NodeMask(n, 1);
    pstate.A = permute_matrix<float>(state.A, perm);
    pstate.A_bar = quantize(pstate.A, &pstate.node_mask);

    const auto in = make_pgsn_inputs(state, cfg);
    const auto pin = make_pgsn_inputs(pstate, cfg);
    for (int i = 0; i < n; ++i) {
      EXPECT_EQ(in.deg_idx[i], pin.deg_idx[perm[i]]);
      EXPECT_EQ((in.landing.row(i) - pin.landing.row(perm[i])).cwiseAbs().maxCoeff(), 0.0f);
      for (int j = 0; j < n; ++j)
        EXPECT_EQ(in.spd_idx[i * n + j], pin.spd_idx[perm[i] * n + perm[j]]);
    }
  }
}
