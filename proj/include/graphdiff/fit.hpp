#pragma once

#include <chrono>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "graphdiff/checkpoint.hpp"
#include "graphdiff/data.hpp"

namespace graphdiff {

struct FitOptions {
  std::string checkpoint_path;
  std::string log_path;
  bool verbose = false;
};

// Runs the denoising score-matching loop. Per-step randomness is derived
// statelessly from (seed, step), so resuming from a checkpoint replays the
// exact batch and noise sequence of an uninterrupted run.
template <typename Scalar>
TrainerSnapshot<Scalar> fit(const DatasetSplit& data, const PgsnConfig& pgsn_cfg,
                            const VpSdeSchedule& sched, const TrainConfig& tcfg,
                            const FitOptions& opts, TrainerSnapshot<Scalar>* resume = nullptr) {
  validate_config(pgsn_cfg);
  validate_schedule(sched);
  validate_train_config(tcfg);
  if (data.train.empty()) throw std::invalid_argument("fit: empty training set");

  TrainerSnapshot<Scalar> snap;
  if (resume) {
    snap = *resume;
  } else {
    Rng init_rng(derive_seed(tcfg.seed, "init"));
    snap.pgsn_cfg = pgsn_cfg;
    snap.sched = sched;
    snap.train_cfg = tcfg;
    snap.params = init_params<Scalar>(pgsn_cfg, init_rng);
    snap.ema = clone_tensors(snap.params);
    snap.adam = AdamState<Scalar>::init_like(snap.params);
    snap.step = 0;
  }

  std::ofstream log;
  if (!opts.log_path.empty()) {
    const bool fresh = snap.step == 0;
    log.open(opts.log_path, fresh ? std::ios::out : std::ios::app);
    if (!log) throw std::runtime_error("fit: cannot open log: " + opts.log_path);
    if (fresh) log << "step,loss,val_loss,wall_time_s\n";
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  auto val_loss = [&]() {
    Rng vrng(derive_seed(tcfg.seed, "val"));
    return dsm_loss(data.val.empty() ? data.train : data.val, snap.params, sched, tcfg, vrng);
  };

  int consecutive_skips = 0;
  for (std::int64_t step = snap.step; step < tcfg.total_steps; ++step) {
    Rng rng(derive_seed(tcfg.seed, "train_step", static_cast<std::uint64_t>(step)));
    std::vector<GraphSample> batch;
    batch.reserve(tcfg.batch_size);
    for (int b = 0; b < tcfg.batch_size; ++b)
      batch.push_back(data.train[rng.below(data.train.size())]);

    const auto out = train_step(snap.params, snap.adam, snap.ema, batch, sched, tcfg, rng,
                                consecutive_skips);
    snap.step = step + 1;

    const bool log_now = snap.step % tcfg.log_interval == 0 || snap.step == tcfg.total_steps;
    const bool val_now = snap.step % tcfg.val_interval == 0 || snap.step == tcfg.total_steps;
    const double vl = val_now ? val_loss() : 0.0;
    if (log && (log_now || val_now)) {
      log << snap.step << "," << out.loss << ",";
      if (val_now) log << vl;
      log << "," << elapsed() << "\n";
      log.flush();
    }
    if (opts.verbose && (log_now || val_now)) {
      std::cerr << "step " << snap.step << " loss " << out.loss;
      if (val_now) std::cerr << " val " << vl;
      std::cerr << (out.skipped ? " [skipped]" : "") << "\n";
    }
    if (!opts.checkpoint_path.empty() &&
        (snap.step % tcfg.checkpoint_interval == 0 || snap.step == tcfg.total_steps))
      save_checkpoint(snap, opts.checkpoint_path);
  }
  if (!opts.checkpoint_path.empty()) save_checkpoint(snap, opts.checkpoint_path);
  return snap;
}

}  // namespace graphdiff
