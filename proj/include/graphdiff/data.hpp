#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "graphdiff/graph.hpp"
#include "graphdiff/rng.hpp"

namespace graphdiff {

// Empirical node-count distribution of a graph set.
struct NodeCountDistribution {
  std::vector<int> support;
  std::vector<double> pmf;
};

inline NodeCountDistribution node_count_pmf(const std::vector<GraphSample>& graphs) {
  std::map<int, int> counts;
  for (const auto& g : graphs) counts[g.n] += 1;
  NodeCountDistribution d;
  for (const auto& [n, c] : counts) {
    d.support.push_back(n);
    d.pmf.push_back(static_cast<double>(c) / graphs.size());
  }
  return d;
}

struct DatasetSplit {
  std::vector<GraphSample> train, val, test;
  NodeCountDistribution train_pmf;
};

// Two communities of equal size, each Erdos-Renyi with p = 0.7, joined by
// inter-community edges with probability 0.05. Total size drawn uniformly
// from the even values in [12, 20].
inline std::vector<GraphSample> gen_community_small(int count, Rng& rng, double p_intra = 0.7,
                                                    double p_inter = 0.05) {
  std::vector<GraphSample> out;
  out.reserve(count);
  for (int g = 0; g < count; ++g) {
    const int n = 12 + 2 * static_cast<int>(rng.below(5));
    const int half = n / 2;
    GraphSample gs;
    gs.n = n;
    gs.adj = BinMat::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const bool same = (i < half) == (j < half);
        if (rng.bernoulli(same ? p_intra : p_inter)) {
          gs.adj(i, j) = 1;
          gs.adj(j, i) = 1;
        }
      }
    validate_graph(gs);
    out.push_back(std::move(gs));
  }
  return out;
}

inline std::vector<GraphSample> gen_er(int count, int n, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("gen_er: p outside [0, 1]");
  std::vector<GraphSample> out;
  out.reserve(count);
  for (int g = 0; g < count; ++g) {
    GraphSample gs;
    gs.n = n;
    gs.adj = BinMat::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.bernoulli(p)) {
          gs.adj(i, j) = 1;
          gs.adj(j, i) = 1;
        }
    out.push_back(std::move(gs));
  }
  return out;
}

// Plain-text serialization: per graph a header line `graph <id> <n>`,
// then one `i j` line per edge with i < j, blank-line separated.
inline void save_edge_lists(const std::vector<GraphSample>& graphs, std::ostream& os) {
  for (size_t g = 0; g < graphs.size(); ++g) {
    os << "graph " << g << " " << graphs[g].n << "\n";
    for (int i = 0; i < graphs[g].n; ++i)
      for (int j = i + 1; j < graphs[g].n; ++j)
        if (graphs[g].adj(i, j)) os << i << " " << j << "\n";
    os << "\n";
  }
}

inline void save_edge_lists(const std::vector<GraphSample>& graphs, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  save_edge_lists(graphs, f);
}

// Parses the format above. Self-loops are rejected; duplicate edges collapse
// unless `strict` is set, in which case they are an error. Diagnostics carry
// 1-based line numbers.
inline std::vector<GraphSample> load_edge_lists(std::istream& is, bool strict = false) {
  std::vector<GraphSample> out;
  std::string line;
  int line_no = 0;
  GraphSample* current = nullptr;
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("edge list parse error at line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string first;
    if (!(ss >> first)) {
      current = nullptr;  // blank line ends a block
      continue;
    }
    if (first == "graph") {
      long long id, n;
      if (!(ss >> id >> n) || n < 0) fail("malformed graph header");
      out.emplace_back();
      current = &out.back();
      current->n = static_cast<int>(n);
      current->adj = BinMat::Zero(current->n, current->n);
    } else {
      if (!current) fail("edge line outside a graph block");
      long long i, j;
      std::istringstream es(line);
      if (!(es >> i >> j)) fail("malformed edge line");
      if (i < 0 || j < 0 || i >= current->n || j >= current->n) fail("edge endpoint out of range");
      if (i == j) fail("self-loop rejected");
      if (current->adj(i, j)) {
        if (strict) fail("duplicate edge");
      }
      current->adj(i, j) = 1;
      current->adj(j, i) = 1;
    }
  }
  for (auto& g : out) validate_graph(g);
  return out;
}

inline std::vector<GraphSample> load_edge_lists(const std::string& path, bool strict = false) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return load_edge_lists(f, strict);
}

// Deterministic shuffled 8:2 train/test split; the validation set is the
// first 20% of the training graphs (a monitoring view, not a third part).
inline DatasetSplit make_split(const std::vector<GraphSample>& graphs, std::uint64_t seed) {
  if (graphs.size() < 5) throw std::invalid_argument("make_split: need at least 5 graphs");
  Rng rng(derive_seed(seed, "split"));
  const auto perm = rng.permutation(static_cast<int>(graphs.size()));
  const int n_train = static_cast<int>(graphs.size() * 8 / 10);
  DatasetSplit s;
  for (size_t k = 0; k < graphs.size(); ++k) {
    if (static_cast<int>(k) < n_train)
      s.train.push_back(graphs[perm[k]]);
    else
      s.test.push_back(graphs[perm[k]]);
  }
  const int n_val = n_train / 5;
  s.val.assign(s.train.begin(), s.train.begin() + n_val);
  s.train_pmf = node_count_pmf(s.train);
  return s;
}

inline void write_manifest(const std::vector<GraphSample>& graphs, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  int n_min = graphs.empty() ? 0 : graphs.front().n;
  int n_max = 0;
  double n_sum = 0, e_sum = 0;
  for (const auto& g : graphs) {
    n_min = std::min(n_min, g.n);
    n_max = std::max(n_max, g.n);
    n_sum += g.n;
    e_sum += g.num_edges();
  }
  f << "graphs=" << graphs.size() << "\n";
  f << "n_min=" << n_min << "\n";
  f << "n_max=" << n_max << "\n";
  f << "n_mean=" << (graphs.empty() ? 0.0 : n_sum / graphs.size()) << "\n";
  f << "edges_mean=" << (graphs.empty() ? 0.0 : e_sum / graphs.size()) << "\n";
  const auto pmf = node_count_pmf(graphs);
  for (size_t k = 0; k < pmf.support.size(); ++k)
    f << "pmf_" << pmf.support[k] << "=" << pmf.pmf[k] << "\n";
}

// Pads every graph in a batch to a common node count, returning masked
// copies; padded slots carry no edges.
inline std::vector<std::pair<GraphSample, NodeMask>> pad_batch(const std::vector<GraphSample>& batch) {
  int n_max = 0;
  for (const auto& g : batch) n_max = std::max(n_max, g.n);
  std::vector<std::pair<GraphSample, NodeMask>> out;
  for (const auto& g : batch) {
    GraphSample padded;
    padded.n = n_max;
    padded.adj = BinMat::Zero(n_max, n_max);
    padded.adj.topLeftCorner(g.n, g.n) = g.adj;
    NodeMask mask(n_max, 0);
    for (int i = 0; i < g.n; ++i) mask[i] = 1;
    out.emplace_back(std::move(padded), std::move(mask));
  }
  return out;
}

}  // namespace graphdiff
