#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "graphdiff/features.hpp"
#include "graphdiff/rng.hpp"
#include "graphdiff/sde.hpp"
#include "graphdiff/tape.hpp"

namespace graphdiff {

// Position-enhanced graph score network: multi-head attention message
// passing over the thresholded edge set, with a node-embedding stream h,
// a random-walk position stream p and a dense edge-feature stream e.
struct PgsnConfig {
  int hidden_dim = 64;
  int num_layers = 4;
  int num_heads = 8;
  int rw_steps = 32;
  double gamma = 0.2;
  int head_mlp_layers = 2;
  int max_nodes = 20;
  int time_embed_dim = 128;

  int edge_dim() const { return hidden_dim; }
  int ffn_dim() const { return 2 * hidden_dim; }
  int head_dim() const { return hidden_dim / num_heads; }
};

inline void validate_config(const PgsnConfig& c) {
  if (c.hidden_dim <= 0 || c.num_layers <= 0 || c.num_heads <= 0 || c.rw_steps <= 0 ||
      c.head_mlp_layers <= 0 || c.max_nodes <= 0 || c.time_embed_dim <= 0)
    throw std::invalid_argument("pgsn config: all counts must be positive");
  if (c.hidden_dim % c.num_heads != 0)
    throw std::invalid_argument("pgsn config: hidden_dim must be divisible by num_heads");
  if (c.time_embed_dim % 2 != 0)
    throw std::invalid_argument("pgsn config: time_embed_dim must be even");
}

template <typename Scalar>
struct PgsnLayerParams {
  using Mat = MatX<Scalar>;
  Mat w_q, b_q, w_k, b_k, w_v, b_v;  // [h,p] projections, (d+r) x d
  Mat w_c, b_c, w_cb, b_cb;          // edge projections, d_e x d
  Mat w_pos, b_pos;                  // per-head square position maps, r x (H*r)
  Mat w_res, b_res;                  // residual node projection, d x d
  Mat ln1_g, ln1_b, ln2_g, ln2_b;
  Mat w_ff1, b_ff1, w_ff2, b_ff2;
  Mat w_time, b_time;  // time conditioning into the FFN input
  Mat w_edge, b_edge;  // edge update, d x d_e
};

template <typename Scalar>
struct PgsnParams {
  using Mat = MatX<Scalar>;

  PgsnConfig cfg;

  Mat w_deg, b_deg;  // degree-onehot embedding, max_nodes x d
  Mat w_pin, b_pin;  // landing-probability projection, r x r
  Mat w_adj, b_adj;  // continuous adjacency value embedding, 1 x d_e/2
  Mat w_spd;         // SPD class embedding, (r+2) x (d_e - d_e/2)
  Mat w_t1, b_t1, w_t2, b_t2;  // time MLP
  Mat w_th, b_th, w_tp, b_tp, w_te, b_te;  // time-to-stream injections
  std::vector<PgsnLayerParams<Scalar>> layers;
  Mat w_h1, b_h1, w_h2, b_h2, w_h3, b_h3;  // score head MLP, zero-init last layer

  // Fixed-order registry used by the optimizer, EMA and checkpointing.
  std::vector<Mat*> tensors() {
    std::vector<Mat*> out = {&w_deg, &b_deg, &w_pin, &b_pin, &w_adj, &b_adj, &w_spd,
                             &w_t1,  &b_t1,  &w_t2,  &b_t2,  &w_th,  &b_th,  &w_tp,
                             &b_tp,  &w_te,  &b_te};
    for (auto& l : layers) {
      for (Mat* m : {&l.w_q, &l.b_q, &l.w_k, &l.b_k, &l.w_v, &l.b_v, &l.w_c, &l.b_c,
                     &l.w_cb, &l.b_cb, &l.w_pos, &l.b_pos, &l.w_res, &l.b_res, &l.ln1_g,
                     &l.ln1_b, &l.ln2_g, &l.ln2_b, &l.w_ff1, &l.b_ff1, &l.w_ff2, &l.b_ff2,
                     &l.w_time, &l.b_time, &l.w_edge, &l.b_edge})
        out.push_back(m);
    }
    for (Mat* m : {&w_h1, &b_h1, &w_h2, &b_h2, &w_h3, &b_h3}) out.push_back(m);
    return out;
  }

  std::vector<const Mat*> tensors() const {
    auto mutable_view = const_cast<PgsnParams*>(this)->tensors();
    return std::vector<const Mat*>(mutable_view.begin(), mutable_view.end());
  }

  std::int64_t parameter_count() const {
    std::int64_t c = 0;
    for (const Mat* m : tensors()) c += m->size();
    return c;
  }
};

namespace detail {

template <typename Scalar>
MatX<Scalar> fanin_normal(int rows, int cols, Rng& rng) {
  MatX<Scalar> m(rows, cols);
  const double s = 1.0 / std::sqrt(static_cast<double>(rows));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = static_cast<Scalar>(s * rng.normal());
  return m;
}

}  // namespace detail

template <typename Scalar>
PgsnParams<Scalar> init_params(const PgsnConfig& cfg, Rng& rng) {
  validate_config(cfg);
  using Mat = MatX<Scalar>;
  const int d = cfg.hidden_dim;
  const int r = cfg.rw_steps;
  const int de = cfg.edge_dim();
  const int da = de / 2;
  const int ds = de - da;
  const int dt = cfg.time_embed_dim;
  const int h = cfg.num_heads;

  PgsnParams<Scalar> p;
  p.cfg = cfg;
  auto w = [&](int rows, int cols) { return detail::fanin_normal<Scalar>(rows, cols, rng); };
  auto zeros = [&](int rows, int cols) { return Mat::Zero(rows, cols).eval(); };
  auto ones = [&](int rows, int cols) { return Mat::Ones(rows, cols).eval(); };

  p.w_deg = w(cfg.max_nodes, d);
  p.b_deg = zeros(1, d);
  p.w_pin = w(r, r);
  p.b_pin = zeros(1, r);
  p.w_adj = w(1, da);
  p.b_adj = zeros(1, da);
  p.w_spd = w(r + 1, ds);  // distance classes 1..r plus the unreachable/self class
  p.w_t1 = w(dt, dt);
  p.b_t1 = zeros(1, dt);
  p.w_t2 = w(dt, dt);
  p.b_t2 = zeros(1, dt);
  p.w_th = w(dt, d);
  p.b_th = zeros(1, d);
  p.w_tp = w(dt, r);
  p.b_tp = zeros(1, r);
  p.w_te = w(dt, de);
  p.b_te = zeros(1, de);

  p.layers.resize(cfg.num_layers);
  for (auto& l : p.layers) {
    l.w_q = w(d + r, d);
    l.b_q = zeros(1, d);
    l.w_k = w(d + r, d);
    l.b_k = zeros(1, d);
    l.w_v = w(d + r, d);
    l.b_v = zeros(1, d);
    l.w_c = w(de, d);
    l.b_c = zeros(1, d);
    l.w_cb = w(de, d);
    l.b_cb = zeros(1, d);
    l.w_pos = w(r, h * r);
    l.b_pos = zeros(1, h * r);
    l.w_res = w(d, d);
    l.b_res = zeros(1, d);
    l.ln1_g = ones(1, d);
    l.ln1_b = zeros(1, d);
    l.ln2_g = ones(1, d);
    l.ln2_b = zeros(1, d);
    l.w_ff1 = w(d, cfg.ffn_dim());
    l.b_ff1 = zeros(1, cfg.ffn_dim());
    l.w_ff2 = w(cfg.ffn_dim(), d);
    l.b_ff2 = zeros(1, d);
    l.w_time = w(dt, d);
    l.b_time = zeros(1, d);
    l.w_edge = w(d, de);
    l.b_edge = zeros(1, de);
  }

  p.w_h1 = w(2 * de, d);
  p.b_h1 = zeros(1, d);
  p.w_h2 = w(d, d);
  p.b_h2 = zeros(1, d);
  p.w_h3 = zeros(d, 1);  // zero-init head: the initial score field is identically 0
  p.b_h3 = zeros(1, 1);
  return p;
}

// Sinusoidal embedding of the scaled time index (t * 1000), deterministic.
template <typename Scalar>
MatX<Scalar> time_embedding(double t, int dim) {
  if (dim % 2 != 0) throw std::invalid_argument("time embedding dim must be even");
  const int half = dim / 2;
  const double s = t * 1000.0;
  MatX<Scalar> e(1, dim);
  for (int k = 0; k < half; ++k) {
    const double w = std::exp(-std::log(10000.0) * (half > 1 ? static_cast<double>(k) / (half - 1) : 0.0));
    e(0, k) = static_cast<Scalar>(std::sin(s * w));
    e(0, half + k) = static_cast<Scalar>(std::cos(s * w));
  }
  return e;
}

// Directed pair bookkeeping for one graph: row a = i*n + j.
struct PairPlan {
  int n = 0;
  std::vector<int> src, dst;
  std::vector<std::uint8_t> attn_mask;  // thresholded edge set, both ends unmasked, i != j
};

template <typename Scalar>
PairPlan make_pair_plan(const DiffusionState<Scalar>& state, double gamma) {
  const int n = static_cast<int>(state.A.rows());
  PairPlan plan;
  plan.n = n;
  plan.src.resize(n * n);
  plan.dst.resize(n * n);
  plan.attn_mask.assign(n * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int a = i * n + j;
      plan.src[a] = i;
      plan.dst[a] = j;
      if (i == j) continue;
      if (!state.node_mask.empty() && (!state.node_mask[i] || !state.node_mask[j])) continue;
      if ((static_cast<double>(state.A(i, j)) + 1.0) / 2.0 > gamma) plan.attn_mask[a] = 1;
    }
  return plan;
}

// Everything the tape-built forward needs besides the parameters.
template <typename Scalar>
struct PgsnInputs {
  PairPlan plan;
  std::vector<int> deg_idx;       // clamped degree bucket per node
  std::vector<int> spd_idx;       // zero-based SPD class per pair; r = unreachable/self
  MatX<Scalar> landing;           // n x r
  MatX<Scalar> pair_values;       // n*n x 1 continuous adjacency entries
  MatX<Scalar> score_mask;        // n x n: off-diagonal, both ends unmasked
  double t = 0.0;
};

template <typename Scalar>
PgsnInputs<Scalar> make_pgsn_inputs(const DiffusionState<Scalar>& state, const PgsnConfig& cfg) {
  const int n = static_cast<int>(state.A.rows());
  PgsnInputs<Scalar> in;
  in.t = state.t;
  in.plan = make_pair_plan(state, cfg.gamma);

  const auto deg = degrees(state.A_bar);
  in.deg_idx.resize(n);
  for (int i = 0; i < n; ++i) in.deg_idx[i] = std::min(deg[i], cfg.max_nodes - 1);

  const auto rw = random_walk_operator(state.A_bar, cfg.rw_steps);
  in.landing = landing_probabilities(rw).template cast<Scalar>();
  const auto spd = spd_onehot(rw);
  in.spd_idx.resize(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) in.spd_idx[i * n + j] = spd.cls(i, j) - 1;

  in.pair_values.resize(n * n, 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) in.pair_values(i * n + j, 0) = state.A(i, j);

  in.score_mask = MatX<Scalar>::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (!state.node_mask.empty() && (!state.node_mask[i] || !state.node_mask[j])) continue;
      in.score_mask(i, j) = Scalar(1);
    }
  return in;
}

// Binds parameter matrices to tape leaves exactly once, so callers can pull
// per-parameter gradients out after backward().
template <typename Scalar>
class ParamVars {
 public:
  using Var = typename Tape<Scalar>::Var;
  explicit ParamVars(Tape<Scalar>& tape) : tape_(&tape) {}

  Var operator()(const MatX<Scalar>& m) {
    auto it = bound_.find(&m);
    if (it != bound_.end()) return it->second;
    Var v = tape_->leaf_ref(m, true);
    bound_.emplace(&m, v);
    return v;
  }

  MatX<Scalar> grad_of(const MatX<Scalar>& m) const {
    auto it = bound_.find(&m);
    if (it == bound_.end()) return MatX<Scalar>::Zero(m.rows(), m.cols());
    return tape_->grad_or_zero(it->second);
  }

 private:
  Tape<Scalar>* tape_;
  std::unordered_map<const MatX<Scalar>*, Var> bound_;
};

namespace detail {

template <typename Scalar>
void check_finite(const Tape<Scalar>& tape, typename Tape<Scalar>::Var v, int layer,
                  const char* stream) {
  if (!tape.val(v).allFinite())
    throw std::runtime_error("pgsn: non-finite " + std::string(stream) + " activations after layer " +
                             std::to_string(layer));
}

}  // namespace detail

// Builds the full score network on a tape and returns the n x n score node:
// symmetrized, zero diagonal, zero on masked rows/columns.
template <typename Scalar>
typename Tape<Scalar>::Var pgsn_forward_on_tape(Tape<Scalar>& tape, const PgsnInputs<Scalar>& in,
                                                const PgsnConfig& cfg,
                                                const PgsnParams<Scalar>& params,
                                                ParamVars<Scalar>* bindings = nullptr) {
  using Var = typename Tape<Scalar>::Var;
  const int n = in.plan.n;
  const int heads = cfg.num_heads;

  ParamVars<Scalar> local(tape);
  ParamVars<Scalar>& P = bindings ? *bindings : local;

  // time conditioning
  Var temb_sin = tape.leaf(time_embedding<Scalar>(in.t, cfg.time_embed_dim));
  Var temb = tape.linear(tape.silu(tape.linear(temb_sin, P(params.w_t1), P(params.b_t1))),
                         P(params.w_t2), P(params.b_t2));

  // initial features
  Var h = tape.add_rowvec(
      tape.add_rowvec(tape.gather_rows(P(params.w_deg), in.deg_idx), P(params.b_deg)),
      tape.linear(temb, P(params.w_th), P(params.b_th)));
  Var p = tape.add_rowvec(
      tape.linear(tape.leaf(in.landing), P(params.w_pin), P(params.b_pin)),
      tape.linear(temb, P(params.w_tp), P(params.b_tp)));
  Var e_adj = tape.add_rowvec(tape.matmul(tape.leaf(in.pair_values), P(params.w_adj)),
                              P(params.b_adj));
  Var e0 = tape.add_rowvec(
      tape.concat_cols(e_adj, tape.gather_rows(P(params.w_spd), in.spd_idx)),
      tape.linear(temb, P(params.w_te), P(params.b_te)));
  Var e = e0;

  const Scalar attn_scale = Scalar(1) / std::sqrt(static_cast<Scalar>(cfg.head_dim()));

  for (int l = 0; l < cfg.num_layers; ++l) {
    const auto& lp = params.layers[l];
    Var hp = tape.concat_cols(h, p);
    Var q = tape.linear(hp, P(lp.w_q), P(lp.b_q));
    Var k = tape.linear(hp, P(lp.w_k), P(lp.b_k));
    Var v = tape.linear(hp, P(lp.w_v), P(lp.b_v));
    Var c = tape.linear(e, P(lp.w_c), P(lp.b_c));
    Var cb = tape.linear(e, P(lp.w_cb), P(lp.b_cb));

    Var q_pair = tape.gather_rows(q, in.plan.src);
    Var k_pair = tape.gather_rows(k, in.plan.dst);
    Var v_pair = tape.gather_rows(v, in.plan.dst);

    // attention over the thresholded neighborhood, biased by edge features
    Var logits = tape.scale(tape.head_dot(q_pair, tape.cmul(k_pair, c), heads), attn_scale);
    Var alpha = tape.segment_softmax(logits, in.plan.src, in.plan.attn_mask, n);

    Var m_h = tape.mul_headwise(tape.cmul(v_pair, cb), alpha, heads);
    Var agg_h = tape.segment_sum(m_h, in.plan.src, n);

    // position messages: per-head square projections of p_j, gated by the
    // mean of the node message (heads averaged, keeping p at width r)
    Var gate = tape.head_mean(m_h, heads);
    Var p_proj = tape.linear(p, P(lp.w_pos), P(lp.b_pos));
    Var p_pair = tape.gather_rows(p_proj, in.plan.dst);
    Var m_p = tape.scale(tape.sum_headchunks(tape.mul_headwise(p_pair, gate, heads), heads),
                         Scalar(1) / Scalar(heads));
    Var agg_p = tape.segment_sum(m_p, in.plan.src, n);

    Var h_hat = tape.layernorm(tape.add(agg_h, tape.linear(h, P(lp.w_res), P(lp.b_res))),
                               P(lp.ln1_g), P(lp.ln1_b));
    Var ffn_in = tape.add_rowvec(h_hat, tape.linear(temb, P(lp.w_time), P(lp.b_time)));
    Var ffn = tape.linear(tape.silu(tape.linear(ffn_in, P(lp.w_ff1), P(lp.b_ff1))),
                          P(lp.w_ff2), P(lp.b_ff2));
    h = tape.layernorm(tape.add(h_hat, ffn), P(lp.ln2_g), P(lp.ln2_b));

    p = tape.add(p, tape.silu(tape.add(agg_p, p)));

    Var h_i = tape.gather_rows(h, in.plan.src);
    Var h_j = tape.gather_rows(h, in.plan.dst);
    e = tape.add(e, tape.silu(tape.linear(tape.add(h_i, h_j), P(lp.w_edge), P(lp.b_edge))));

    detail::check_finite(tape, h, l, "node");
    detail::check_finite(tape, p, l, "position");
    detail::check_finite(tape, e, l, "edge");
  }

  // per-edge score head on [e_L, e_0]
  Var head = tape.concat_cols(e, e0);
  head = tape.silu(tape.linear(head, P(params.w_h1), P(params.b_h1)));
  head = tape.silu(tape.linear(head, P(params.w_h2), P(params.b_h2)));
  Var raw = tape.linear(head, P(params.w_h3), P(params.b_h3));

  Var square = tape.pairs_to_square(raw, n);
  Var sym = tape.scale(tape.add(square, tape.transpose(square)), Scalar(0.5));
  Var out = tape.cmul(sym, tape.leaf(in.score_mask));
  if (!tape.val(out).allFinite()) throw std::runtime_error("pgsn: non-finite score output");
  return out;
}

// Inference-only forward pass.
template <typename Scalar>
MatX<Scalar> pgsn_forward(const DiffusionState<Scalar>& state, const PgsnConfig& cfg,
                          const PgsnParams<Scalar>& params) {
  Tape<Scalar> tape(/*grad_enabled=*/false);
  const auto inputs = make_pgsn_inputs(state, cfg);
  auto score = pgsn_forward_on_tape(tape, inputs, cfg, params);
  return tape.val(score);
}

}  // namespace graphdiff
