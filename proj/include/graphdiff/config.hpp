#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "graphdiff/pgsn.hpp"
#include "graphdiff/samplers.hpp"
#include "graphdiff/sde.hpp"
#include "graphdiff/trainer.hpp"

namespace graphdiff {

// Flat key-value configuration with section prefixes (sde.beta_max=20).
// Files hold one pair per line; '#' starts a comment. Later assignments win,
// so command-line overrides are applied after the file.
class KvConfig {
 public:
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  void load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        if (line.find_first_not_of(" \t\r") != std::string::npos)
          throw std::invalid_argument("config: malformed line " + std::to_string(line_no) + " in " + path);
        continue;
      }
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config: expected a number for " + key + ", got '" + it->second + "'");
    }
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      size_t pos = 0;
      const long long v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config: expected an integer for " + key + ", got '" + it->second + "'");
    }
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

// Everything one run needs; every field round-trips through the key-value
// format losslessly.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";

  std::string dataset = "community_small";  // community_small | er | edge_list
  int data_count = 100;
  int er_n = 16;
  double er_p = 0.5;
  std::string edge_list_path;

  VpSdeSchedule sched;
  PgsnConfig pgsn;
  TrainConfig train;
  SamplerConfig sampler;
  int sample_count = 1024;
};

inline SamplerMethod parse_method(const std::string& s) {
  if (s == "em") return SamplerMethod::em;
  if (s == "pc") return SamplerMethod::pc;
  if (s == "ode_fixed") return SamplerMethod::ode_fixed;
  if (s == "ode_adaptive") return SamplerMethod::ode_adaptive;
  throw std::invalid_argument("config: unknown sampler method '" + s + "'");
}

inline std::string method_name(SamplerMethod m) {
  switch (m) {
    case SamplerMethod::em: return "em";
    case SamplerMethod::pc: return "pc";
    case SamplerMethod::ode_fixed: return "ode_fixed";
    case SamplerMethod::ode_adaptive: return "ode_adaptive";
  }
  return "?";
}

inline RunConfig run_config_from(const KvConfig& kv) {
  RunConfig c;
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  c.out_dir = kv.get_str("out", c.out_dir);
  c.dataset = kv.get_str("data.dataset", c.dataset);
  c.data_count = static_cast<int>(kv.get_int("data.count", c.data_count));
  c.er_n = static_cast<int>(kv.get_int("data.er_n", c.er_n));
  c.er_p = kv.get_double("data.er_p", c.er_p);
  c.edge_list_path = kv.get_str("data.edge_list_path", c.edge_list_path);

  c.sched.beta_min = kv.get_double("sde.beta_min", c.sched.beta_min);
  c.sched.beta_max = kv.get_double("sde.beta_max", c.sched.beta_max);

  c.pgsn.hidden_dim = static_cast<int>(kv.get_int("pgsn.hidden_dim", c.pgsn.hidden_dim));
  c.pgsn.num_layers = static_cast<int>(kv.get_int("pgsn.num_layers", c.pgsn.num_layers));
  c.pgsn.num_heads = static_cast<int>(kv.get_int("pgsn.num_heads", c.pgsn.num_heads));
  c.pgsn.rw_steps = static_cast<int>(kv.get_int("pgsn.rw_steps", c.pgsn.rw_steps));
  c.pgsn.gamma = kv.get_double("pgsn.gamma", c.pgsn.gamma);
  c.pgsn.head_mlp_layers = static_cast<int>(kv.get_int("pgsn.head_mlp_layers", c.pgsn.head_mlp_layers));
  c.pgsn.max_nodes = static_cast<int>(kv.get_int("pgsn.max_nodes", c.pgsn.max_nodes));
  c.pgsn.time_embed_dim = static_cast<int>(kv.get_int("pgsn.time_embed_dim", c.pgsn.time_embed_dim));

  c.train.learning_rate = kv.get_double("train.learning_rate", c.train.learning_rate);
  c.train.ema_momentum = kv.get_double("train.ema_momentum", c.train.ema_momentum);
  c.train.batch_size = static_cast<int>(kv.get_int("train.batch_size", c.train.batch_size));
  c.train.total_steps = kv.get_int("train.total_steps", c.train.total_steps);
  c.train.t_eps = kv.get_double("train.t_eps", c.train.t_eps);
  const std::string lp = kv.get_str("train.lambda_policy", "sigma_squared");
  if (lp == "sigma_squared")
    c.train.lambda_policy = LambdaPolicy::sigma_squared;
  else if (lp == "uniform")
    c.train.lambda_policy = LambdaPolicy::uniform;
  else
    throw std::invalid_argument("config: unknown lambda policy '" + lp + "'");
  c.train.checkpoint_interval = kv.get_int("train.checkpoint_interval", c.train.checkpoint_interval);
  c.train.grad_clip_norm = kv.get_double("train.grad_clip_norm", c.train.grad_clip_norm);
  c.train.log_interval = kv.get_int("train.log_interval", c.train.log_interval);
  c.train.val_interval = kv.get_int("train.val_interval", c.train.val_interval);
  c.train.seed = c.seed;

  c.sampler.method = parse_method(kv.get_str("sample.method", "pc"));
  c.sampler.num_steps = static_cast<int>(kv.get_int("sample.num_steps", c.sampler.num_steps));
  c.sampler.corrector_steps_per_iter =
      static_cast<int>(kv.get_int("sample.corrector_steps", c.sampler.corrector_steps_per_iter));
  c.sampler.snr_r = kv.get_double("sample.snr_r", c.sampler.snr_r);
  c.sampler.ode_step_size = kv.get_double("sample.ode_step_size", c.sampler.ode_step_size);
  c.sampler.ode_error_tol = kv.get_double("sample.ode_error_tol", c.sampler.ode_error_tol);
  c.sampler.t_end = kv.get_double("sample.t_end", c.sampler.t_end);
  c.sample_count = static_cast<int>(kv.get_int("sample.count", c.sample_count));
  return c;
}

inline void write_config_echo(const RunConfig& c, std::ostream& os) {
  os << "seed=" << c.seed << "\n";
  os << "out=" << c.out_dir << "\n";
  os << "data.dataset=" << c.dataset << "\n";
  os << "data.count=" << c.data_count << "\n";
  os << "data.er_n=" << c.er_n << "\n";
  os << "data.er_p=" << c.er_p << "\n";
  os << "data.edge_list_path=" << c.edge_list_path << "\n";
  os << "sde.beta_min=" << c.sched.beta_min << "\n";
  os << "sde.beta_max=" << c.sched.beta_max << "\n";
  os << "pgsn.hidden_dim=" << c.pgsn.hidden_dim << "\n";
  os << "pgsn.num_layers=" << c.pgsn.num_layers << "\n";
  os << "pgsn.num_heads=" << c.pgsn.num_heads << "\n";
  os << "pgsn.rw_steps=" << c.pgsn.rw_steps << "\n";
  os << "pgsn.gamma=" << c.pgsn.gamma << "\n";
  os << "pgsn.head_mlp_layers=" << c.pgsn.head_mlp_layers << "\n";
  os << "pgsn.max_nodes=" << c.pgsn.max_nodes << "\n";
  os << "pgsn.time_embed_dim=" << c.pgsn.time_embed_dim << "\n";
  os << "train.learning_rate=" << c.train.learning_rate << "\n";
  os << "train.ema_momentum=" << c.train.ema_momentum << "\n";
  os << "train.batch_size=" << c.train.batch_size << "\n";
  os << "train.total_steps=" << c.train.total_steps << "\n";
  os << "train.t_eps=" << c.train.t_eps << "\n";
  os << "train.lambda_policy="
     << (c.train.lambda_policy == LambdaPolicy::sigma_squared ? "sigma_squared" : "uniform") << "\n";
  os << "train.checkpoint_interval=" << c.train.checkpoint_interval << "\n";
  os << "train.grad_clip_norm=" << c.train.grad_clip_norm << "\n";
  os << "train.log_interval=" << c.train.log_interval << "\n";
  os << "train.val_interval=" << c.train.val_interval << "\n";
  os << "sample.method=" << method_name(c.sampler.method) << "\n";
  os << "sample.num_steps=" << c.sampler.num_steps << "\n";
  os << "sample.corrector_steps=" << c.sampler.corrector_steps_per_iter << "\n";
  os << "sample.snr_r=" << c.sampler.snr_r << "\n";
  os << "sample.ode_step_size=" << c.sampler.ode_step_size << "\n";
  os << "sample.ode_error_tol=" << c.sampler.ode_error_tol << "\n";
  os << "sample.t_end=" << c.sampler.t_end << "\n";
  os << "sample.count=" << c.sample_count << "\n";
}

}  // namespace graphdiff
