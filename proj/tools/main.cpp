// Command-line entry points: dataset generation, training, sampling and
// MMD evaluation, all driven by one seeded key-value configuration.

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "graphdiff/checkpoint.hpp"
#include "graphdiff/config.hpp"
#include "graphdiff/data.hpp"
#include "graphdiff/fit.hpp"
#include "graphdiff/metrics.hpp"
#include "graphdiff/samplers.hpp"
#include "graphdiff/score_model.hpp"

namespace fs = std::filesystem;
using namespace graphdiff;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitValidation = 2;

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  long long seed = -1;
};

void add_common(CLI::App* cmd, CommonFlags& c) {
  cmd->add_option("--config", c.config_path, "key-value config file");
  cmd->add_option("--set", c.sets, "override config entries, key=value (last wins)")
      ->type_name("KEY=VALUE");
  cmd->add_option("--out", c.out_dir, "output directory");
  cmd->add_option("--seed", c.seed, "global seed");
}

RunConfig resolve_config(const CommonFlags& c, const std::vector<std::pair<std::string, std::string>>& extra) {
  KvConfig kv;
  if (!c.config_path.empty()) kv.load_file(c.config_path);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::runtime_error("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : extra) kv.set(k, v);
  if (c.seed >= 0) kv.set("seed", std::to_string(c.seed));
  if (!c.out_dir.empty()) kv.set("out", c.out_dir);
  RunConfig rc = run_config_from(kv);
  if (const char* root = std::getenv("GRAPHDIFF_OUT_ROOT"); root && *root)
    rc.out_dir = (fs::path(root) / rc.out_dir).string();
  return rc;
}

void write_echo(const RunConfig& rc, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write config echo: " + path.string());
  write_config_echo(rc, f);
}

int cmd_gen_data(const CommonFlags& common, const std::vector<std::pair<std::string, std::string>>& extra) {
  const RunConfig rc = resolve_config(common, extra);
  std::vector<GraphSample> graphs;
  Rng rng(derive_seed(rc.seed, "data"));
  if (rc.dataset == "community_small") {
    graphs = gen_community_small(rc.data_count, rng);
  } else if (rc.dataset == "er") {
    graphs = gen_er(rc.data_count, rc.er_n, rc.er_p, rng);
  } else if (rc.dataset == "edge_list") {
    if (rc.edge_list_path.empty())
      throw std::invalid_argument("dataset 'edge_list' needs data.edge_list_path");
    graphs = load_edge_lists(rc.edge_list_path);
  } else {
    throw std::invalid_argument("unknown dataset '" + rc.dataset + "' (community_small | er | edge_list)");
  }

  const fs::path out(rc.out_dir);
  fs::create_directories(out);
  save_edge_lists(graphs, (out / "dataset.txt").string());
  write_manifest(graphs, (out / "manifest.txt").string());
  const auto split = make_split(graphs, rc.seed);
  save_edge_lists(split.train, (out / "train.txt").string());
  save_edge_lists(split.val, (out / "val.txt").string());
  save_edge_lists(split.test, (out / "test.txt").string());
  write_echo(rc, out / "config.txt");
  std::cout << "wrote " << graphs.size() << " graphs to " << out.string() << " (train "
            << split.train.size() << ", val " << split.val.size() << ", test "
            << split.test.size() << ")\n";
  return kExitOk;
}

int cmd_train(const CommonFlags& common, const std::string& data_dir, bool resume, bool verbose,
              const std::vector<std::pair<std::string, std::string>>& extra) {
  const RunConfig rc = resolve_config(common, extra);
  const fs::path data(data_dir.empty() ? rc.out_dir : data_dir);
  DatasetSplit split;
  split.train = load_edge_lists((data / "train.txt").string());
  split.val = load_edge_lists((data / "val.txt").string());
  split.test = load_edge_lists((data / "test.txt").string());
  split.train_pmf = node_count_pmf(split.train);

  const fs::path out(rc.out_dir);
  fs::create_directories(out);
  const std::string ckpt = (out / "checkpoint.bin").string();

  TrainConfig tcfg = rc.train;
  tcfg.seed = rc.seed;
  FitOptions opts;
  opts.checkpoint_path = ckpt;
  opts.log_path = (out / "train_log.csv").string();
  opts.verbose = verbose;

  TrainerSnapshot<float> snap;
  TrainerSnapshot<float>* resume_ptr = nullptr;
  if (resume) {
    snap = load_checkpoint<float>(ckpt);
    snap.train_cfg.total_steps = tcfg.total_steps;  // allow extending a finished run
    resume_ptr = &snap;
  }
  write_echo(rc, out / "config.txt");
  const auto result = fit<float>(split, rc.pgsn, rc.sched, tcfg, opts, resume_ptr);
  std::cout << "trained to step " << result.step << ", checkpoint at " << ckpt << "\n";
  return kExitOk;
}

int cmd_sample(const CommonFlags& common, const std::string& checkpoint, const std::string& data_dir,
               const std::vector<std::pair<std::string, std::string>>& extra) {
  const RunConfig rc = resolve_config(common, extra);
  const auto snap = load_checkpoint<float>(checkpoint);
  const auto params = with_tensors(snap.params, snap.ema);  // EMA weights for sampling

  const fs::path data(data_dir);
  const auto train = load_edge_lists((data / "train.txt").string());
  const auto pmf = node_count_pmf(train);

  const fs::path out(rc.out_dir);
  fs::create_directories(out);

  SamplerConfig scfg = rc.sampler;
  validate_sampler_config(scfg);

  std::vector<GraphSample> samples;
  std::vector<long long> nfes;
  std::vector<double> wall_ms;
  samples.reserve(rc.sample_count);
  const auto t_begin = std::chrono::steady_clock::now();
  for (int k = 0; k < rc.sample_count; ++k) {
    Rng rng(derive_seed(rc.seed, "sample", static_cast<std::uint64_t>(k)));
    const int n = sample_node_count(pmf.support, pmf.pmf, rng);
    const auto score_fn = make_score_fn<float>(snap.pgsn_cfg, params, NodeMask(n, 1));
    const auto t0 = std::chrono::steady_clock::now();
    SampleResult res;
    switch (scfg.method) {
      case SamplerMethod::em:
        res = em_sample(score_fn, n, scfg, snap.sched, rng);
        break;
      case SamplerMethod::pc:
        res = pc_sample(score_fn, n, scfg, snap.sched, rng);
        break;
      case SamplerMethod::ode_fixed:
        res = ode_sample_fixed(score_fn, n, scfg.ode_step_size, snap.sched, rng, scfg.t_end);
        break;
      case SamplerMethod::ode_adaptive:
        res = ode_sample_adaptive(score_fn, n, scfg.ode_error_tol, snap.sched, rng, scfg.t_end);
        break;
    }
    wall_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    nfes.push_back(res.nfe);
    samples.push_back(std::move(res.graph));
    if ((k + 1) % 64 == 0)
      std::cerr << "sampled " << (k + 1) << "/" << rc.sample_count << "\r" << std::flush;
  }
  const double total_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();

  save_edge_lists(samples, (out / "samples.txt").string());
  std::ofstream mf(out / "sample_manifest.txt");
  mf << "method=" << method_name(scfg.method) << "\n";
  mf << "count=" << samples.size() << "\n";
  mf << "seed=" << rc.seed << "\n";
  mf << "batch_size=1\n";
  long long nfe_min = nfes.empty() ? 0 : *std::min_element(nfes.begin(), nfes.end());
  long long nfe_max = nfes.empty() ? 0 : *std::max_element(nfes.begin(), nfes.end());
  mf << "nfe=" << (nfe_min == nfe_max ? std::to_string(nfe_min)
                                      : std::to_string(nfe_min) + ".." + std::to_string(nfe_max))
     << "\n";
  mf << "total_wall_s=" << total_s << "\n";
  for (size_t k = 0; k < samples.size(); ++k)
    mf << "graph " << k << " nfe=" << nfes[k] << " wall_ms=" << wall_ms[k] << "\n";
  write_echo(rc, out / "config.txt");
  std::cout << "\nwrote " << samples.size() << " samples, nfe " << nfe_min
            << (nfe_min == nfe_max ? "" : ".." + std::to_string(nfe_max)) << ", "
            << total_s << " s total\n";
  return kExitOk;
}

int cmd_eval(const CommonFlags& common, const std::string& generated_path, const std::string& test_path,
             const std::string& train_path, const std::string& baseline,
             const std::vector<std::pair<std::string, std::string>>& extra) {
  const RunConfig rc = resolve_config(common, extra);
  const auto generated = load_edge_lists(generated_path);
  const auto test = load_edge_lists(test_path);
  const auto train = load_edge_lists(train_path);
  const auto report = evaluate(generated, test, train);

  const fs::path out(rc.out_dir);
  fs::create_directories(out);

  std::optional<MmdReport> er_report;
  double er_p = 0.0;
  if (baseline == "er") {
    er_p = er_baseline(train);
    Rng rng(derive_seed(rc.seed, "er_baseline"));
    const auto pmf = node_count_pmf(train);
    std::vector<GraphSample> er_graphs;
    er_graphs.reserve(generated.size());
    for (size_t k = 0; k < generated.size(); ++k)
      er_graphs.push_back(gen_er(1, sample_node_count(pmf.support, pmf.pmf, rng), er_p, rng)[0]);
    er_report = evaluate(er_graphs, test, train);
  } else if (!baseline.empty()) {
    throw std::invalid_argument("unknown baseline '" + baseline + "' (supported: er)");
  }

  char line[256];
  std::ofstream table(out / "report.txt");
  auto emit = [&](const std::string& s) {
    table << s;
    std::cout << s;
  };
  emit("              Deg.     Clus.    Spec.    Avg.\n");
  std::snprintf(line, sizeof(line), "Train/Test    %-8.3f %-8.3f %-8.3f %-8.3f\n",
                report.ref_degree.mmd, report.ref_clustering.mmd, report.ref_spectrum.mmd,
                report.ref_average);
  emit(line);
  if (er_report) {
    std::snprintf(line, sizeof(line), "ER            %-8.3f %-8.3f %-8.3f %-8.3f\n",
                  er_report->degree.mmd, er_report->clustering.mmd, er_report->spectrum.mmd,
                  er_report->average);
    emit(line);
  }
  std::snprintf(line, sizeof(line), "Generated     %-8.3f %-8.3f %-8.3f %-8.3f\n",
                report.degree.mmd, report.clustering.mmd, report.spectrum.mmd, report.average);
  emit(line);

  std::ofstream kvf(out / "report.kv");
  auto put = [&](const std::string& key, double v) { kvf << key << "=" << v << "\n"; };
  put("generated.degree", report.degree.mmd);
  put("generated.degree_sigma", report.degree.sigma);
  put("generated.clustering", report.clustering.mmd);
  put("generated.clustering_sigma", report.clustering.sigma);
  put("generated.spectrum", report.spectrum.mmd);
  put("generated.spectrum_sigma", report.spectrum.sigma);
  put("generated.avg", report.average);
  put("ref.degree", report.ref_degree.mmd);
  put("ref.clustering", report.ref_clustering.mmd);
  put("ref.spectrum", report.ref_spectrum.mmd);
  put("ref.avg", report.ref_average);
  if (er_report) {
    put("baseline.er.p", er_p);
    put("baseline.er.degree", er_report->degree.mmd);
    put("baseline.er.clustering", er_report->clustering.mmd);
    put("baseline.er.spectrum", er_report->spectrum.mmd);
    put("baseline.er.avg", er_report->average);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continuous-time graph diffusion: data, training, sampling, evaluation"};
  app.require_subcommand(1);

  CommonFlags c_gen, c_train, c_sample, c_eval;
  std::string dataset_flag, train_data_dir, ckpt_path, sample_data_dir;
  std::string eval_generated, eval_test, eval_train, eval_baseline;
  bool resume = false, verbose = false;
  long long steps_flag = -1, count_flag = -1, num_steps_flag = -1;
  double step_size_flag = -1, error_tol_flag = -1, snr_flag = -1, lr_flag = -1;
  long long batch_flag = -1;
  std::string method_flag;

  auto* gen = app.add_subcommand("gen-data", "generate or ingest a dataset and write splits");
  add_common(gen, c_gen);
  gen->add_option("--dataset", dataset_flag, "community_small | er | edge_list");
  gen->add_option("--count", count_flag, "number of graphs");

  auto* train = app.add_subcommand("train", "train the score network");
  add_common(train, c_train);
  train->add_option("--data", train_data_dir, "dataset directory (from gen-data)");
  train->add_option("--steps", steps_flag, "total training steps");
  train->add_option("--batch-size", batch_flag, "batch size");
  train->add_option("--lr", lr_flag, "learning rate");
  train->add_flag("--resume", resume, "resume from the checkpoint in --out");
  train->add_flag("--verbose", verbose, "log progress to stderr");

  auto* sample = app.add_subcommand("sample", "generate graphs from a checkpoint");
  add_common(sample, c_sample);
  sample->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  sample->add_option("--data", sample_data_dir, "dataset directory (node-count pmf source)")->required();
  sample->add_option("--method", method_flag, "em | pc | ode_fixed | ode_adaptive");
  sample->add_option("--count", count_flag, "number of graphs to sample");
  sample->add_option("--num-steps", num_steps_flag, "EM/PC discretization steps");
  sample->add_option("--step-size", step_size_flag, "fixed ODE step size");
  sample->add_option("--error-tol", error_tol_flag, "adaptive ODE error tolerance");
  sample->add_option("--snr", snr_flag, "corrector signal-to-noise coefficient");

  auto* eval = app.add_subcommand("eval", "evaluate samples against test/train sets");
  add_common(eval, c_eval);
  eval->add_option("--generated", eval_generated, "generated edge-list file")->required();
  eval->add_option("--test", eval_test, "test edge-list file")->required();
  eval->add_option("--train", eval_train, "train edge-list file")->required();
  eval->add_option("--baseline", eval_baseline, "add a baseline row (er)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    std::vector<std::pair<std::string, std::string>> extra;
    if (gen->parsed()) {
      if (!dataset_flag.empty()) extra.emplace_back("data.dataset", dataset_flag);
      if (count_flag >= 0) extra.emplace_back("data.count", std::to_string(count_flag));
      return cmd_gen_data(c_gen, extra);
    }
    if (train->parsed()) {
      if (steps_flag >= 0) extra.emplace_back("train.total_steps", std::to_string(steps_flag));
      if (batch_flag >= 0) extra.emplace_back("train.batch_size", std::to_string(batch_flag));
      if (lr_flag >= 0) extra.emplace_back("train.learning_rate", std::to_string(lr_flag));
      return cmd_train(c_train, train_data_dir, resume, verbose, extra);
    }
    if (sample->parsed()) {
      if (!method_flag.empty()) extra.emplace_back("sample.method", method_flag);
      if (count_flag >= 0) extra.emplace_back("sample.count", std::to_string(count_flag));
      if (num_steps_flag >= 0) extra.emplace_back("sample.num_steps", std::to_string(num_steps_flag));
      if (step_size_flag >= 0) extra.emplace_back("sample.ode_step_size", std::to_string(step_size_flag));
      if (error_tol_flag >= 0) extra.emplace_back("sample.ode_error_tol", std::to_string(error_tol_flag));
      if (snr_flag >= 0) extra.emplace_back("sample.snr_r", std::to_string(snr_flag));
      return cmd_sample(c_sample, ckpt_path, sample_data_dir, extra);
    }
    if (eval->parsed()) return cmd_eval(c_eval, eval_generated, eval_test, eval_train, eval_baseline, extra);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitValidation;
}
