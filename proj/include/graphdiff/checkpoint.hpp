#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "graphdiff/trainer.hpp"

namespace graphdiff {

// Full training snapshot: network/schedule/training configuration, the live
// parameters, their EMA shadow, the optimizer state and the step counter.
// Tensors are stored as raw little-endian scalar bytes, so parameters
// round-trip bit-exactly.
template <typename Scalar>
struct TrainerSnapshot {
  PgsnConfig pgsn_cfg;
  VpSdeSchedule sched;
  TrainConfig train_cfg;
  PgsnParams<Scalar> params;
  std::vector<MatX<Scalar>> ema;
  AdamState<Scalar> adam;
  std::int64_t step = 0;
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'G', 'D', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw std::runtime_error("checkpoint: truncated file");
  return v;
}

template <typename Scalar>
void write_mat(std::ostream& os, const MatX<Scalar>& m) {
  write_pod<std::int64_t>(os, m.rows());
  write_pod<std::int64_t>(os, m.cols());
  os.write(reinterpret_cast<const char*>(m.data()), sizeof(Scalar) * m.size());
}

template <typename Scalar>
MatX<Scalar> read_mat(std::istream& is) {
  const auto rows = read_pod<std::int64_t>(is);
  const auto cols = read_pod<std::int64_t>(is);
  MatX<Scalar> m(rows, cols);
  if (!is.read(reinterpret_cast<char*>(m.data()), sizeof(Scalar) * m.size()))
    throw std::runtime_error("checkpoint: truncated tensor data");
  return m;
}

template <typename Scalar>
void write_mats(std::ostream& os, const std::vector<MatX<Scalar>>& ms) {
  write_pod<std::int64_t>(os, static_cast<std::int64_t>(ms.size()));
  for (const auto& m : ms) write_mat(os, m);
}

template <typename Scalar>
std::vector<MatX<Scalar>> read_mats(std::istream& is) {
  const auto count = read_pod<std::int64_t>(is);
  std::vector<MatX<Scalar>> ms;
  ms.reserve(count);
  for (std::int64_t i = 0; i < count; ++i) ms.push_back(read_mat<Scalar>(is));
  return ms;
}

}  // namespace detail

template <typename Scalar>
void save_checkpoint(const TrainerSnapshot<Scalar>& snap, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  using namespace detail;
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod<std::int32_t>(os, static_cast<std::int32_t>(sizeof(Scalar)));

  const PgsnConfig& c = snap.pgsn_cfg;
  for (int v : {c.hidden_dim, c.num_layers, c.num_heads, c.rw_steps, c.head_mlp_layers,
                c.max_nodes, c.time_embed_dim})
    write_pod<std::int32_t>(os, v);
  write_pod<double>(os, c.gamma);
  write_pod<double>(os, snap.sched.beta_min);
  write_pod<double>(os, snap.sched.beta_max);

  const TrainConfig& t = snap.train_cfg;
  write_pod<double>(os, t.learning_rate);
  write_pod<double>(os, t.ema_momentum);
  write_pod<std::int32_t>(os, t.batch_size);
  write_pod<std::int64_t>(os, t.total_steps);
  write_pod<double>(os, t.t_eps);
  write_pod<std::int32_t>(os, t.lambda_policy == LambdaPolicy::sigma_squared ? 0 : 1);
  write_pod<std::uint64_t>(os, t.seed);
  write_pod<std::int64_t>(os, t.checkpoint_interval);
  write_pod<double>(os, t.adam_beta1);
  write_pod<double>(os, t.adam_beta2);
  write_pod<double>(os, t.adam_eps);
  write_pod<double>(os, t.grad_clip_norm);
  write_pod<std::int64_t>(os, t.log_interval);
  write_pod<std::int64_t>(os, t.val_interval);

  write_pod<std::int64_t>(os, snap.step);
  write_pod<std::int64_t>(os, snap.adam.step);

  auto tensors = const_cast<PgsnParams<Scalar>&>(snap.params).tensors();
  write_pod<std::int64_t>(os, static_cast<std::int64_t>(tensors.size()));
  for (auto* m : tensors) write_mat(os, *m);
  write_mats(os, snap.ema);
  write_mats(os, snap.adam.m);
  write_mats(os, snap.adam.v);
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

template <typename Scalar>
TrainerSnapshot<Scalar> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  using namespace detail;
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic: " + path);
  if (read_pod<std::int32_t>(is) != static_cast<std::int32_t>(sizeof(Scalar)))
    throw std::runtime_error("checkpoint: scalar width mismatch");

  TrainerSnapshot<Scalar> snap;
  PgsnConfig& c = snap.pgsn_cfg;
  c.hidden_dim = read_pod<std::int32_t>(is);
  c.num_layers = read_pod<std::int32_t>(is);
  c.num_heads = read_pod<std::int32_t>(is);
  c.rw_steps = read_pod<std::int32_t>(is);
  c.head_mlp_layers = read_pod<std::int32_t>(is);
  c.max_nodes = read_pod<std::int32_t>(is);
  c.time_embed_dim = read_pod<std::int32_t>(is);
  c.gamma = read_pod<double>(is);
  snap.sched.beta_min = read_pod<double>(is);
  snap.sched.beta_max = read_pod<double>(is);

  TrainConfig& t = snap.train_cfg;
  t.learning_rate = read_pod<double>(is);
  t.ema_momentum = read_pod<double>(is);
  t.batch_size = read_pod<std::int32_t>(is);
  t.total_steps = read_pod<std::int64_t>(is);
  t.t_eps = read_pod<double>(is);
  t.lambda_policy = read_pod<std::int32_t>(is) == 0 ? LambdaPolicy::sigma_squared : LambdaPolicy::uniform;
  t.seed = read_pod<std::uint64_t>(is);
  t.checkpoint_interval = read_pod<std::int64_t>(is);
  t.adam_beta1 = read_pod<double>(is);
  t.adam_beta2 = read_pod<double>(is);
  t.adam_eps = read_pod<double>(is);
  t.grad_clip_norm = read_pod<double>(is);
  t.log_interval = read_pod<std::int64_t>(is);
  t.val_interval = read_pod<std::int64_t>(is);

  snap.step = read_pod<std::int64_t>(is);
  snap.adam.step = read_pod<std::int64_t>(is);

  Rng dummy(0);
  snap.params = init_params<Scalar>(c, dummy);
  auto tensors = snap.params.tensors();
  const auto count = read_pod<std::int64_t>(is);
  if (count != static_cast<std::int64_t>(tensors.size()))
    throw std::runtime_error("checkpoint: tensor count mismatch");
  for (auto* m : tensors) {
    auto loaded = read_mat<Scalar>(is);
    if (loaded.rows() != m->rows() || loaded.cols() != m->cols())
      throw std::runtime_error("checkpoint: tensor shape mismatch");
    *m = std::move(loaded);
  }
  snap.ema = read_mats<Scalar>(is);
  snap.adam.m = read_mats<Scalar>(is);
  snap.adam.v = read_mats<Scalar>(is);
  return snap;
}

}  // namespace graphdiff
