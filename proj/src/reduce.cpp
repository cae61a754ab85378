#include "hgs/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hgs::reduce {

namespace {

// Train a plain MNODE on a candidate edge set, return its best validation MSE.
train::TrainResult train_candidate(const graph::SuperGraph& g, const graph::EdgeSet& edges,
                                   const data::Dataset& data, const data::IndexSlice& train_idx,
                                   const data::IndexSlice& val_idx, const ReduceConfig& cfg) {
  auto sub = graph::with_edges(g, edges);
  auto model = mnode::build_model(sub, cfg.shape, cfg.model);
  return train::train(model, data, train_idx, val_idx, cfg.tc, cfg.lc);
}

}  // namespace

ReductionResult reduce_random(const graph::SuperGraph& g, const data::Dataset& data,
                              const data::IndexSlice& train_idx, const data::IndexSlice& val_idx,
                              int R, const std::vector<double>& ratios, const ReduceConfig& cfg,
                              uint64_t sample_seed) {
  if (R < 1) throw ValidationError("reduce_random: R must be >= 1");
  std::vector<graph::Edge> all_edges(g.edges.begin(), g.edges.end());
  if (all_edges.empty()) throw ValidationError("reduce_random: graph has no edges");

  Rng rng(sample_seed);
  ReductionResult res;
  res.chosen_val_loss = std::numeric_limits<double>::infinity();
  graph::EdgeSet best_edges;

  for (double p : ratios) {
    if (p <= 0 || p >= 1) throw ValidationError("reduce_random: ratios must lie in (0,1)");
    size_t keep = static_cast<size_t>(
        std::ceil((1.0 - p) * static_cast<double>(all_edges.size())));
    if (keep == 0) throw ValidationError("reduce_random: candidate would have no edges");
    for (int r = 0; r < R; ++r) {
      // partial Fisher-Yates draw of `keep` distinct edges
      std::vector<graph::Edge> pool = all_edges;
      graph::EdgeSet edges;
      for (size_t i = 0; i < keep; ++i) {
        size_t j = i + rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
        edges.insert(pool[i]);
      }
      auto tr = train_candidate(g, edges, data, train_idx, val_idx, cfg);
      res.trace.push_back({edges, tr.best_val_mse, "p=" + std::to_string(p)});
      if (tr.best_val_mse < res.chosen_val_loss) {
        res.chosen_val_loss = tr.best_val_mse;
        best_edges = edges;
        res.final_training = std::move(tr);
      }
    }
  }
  res.chosen = graph::with_edges(g, best_edges);
  return res;
}

ReductionResult reduce_greedy(const graph::SuperGraph& g, const data::Dataset& data,
                              const data::IndexSlice& train_idx, const data::IndexSlice& val_idx,
                              const ReduceConfig& cfg) {
  if (g.edges.empty()) throw ValidationError("reduce_greedy: graph has no edges");
  ReductionResult res;
  graph::EdgeSet current = g.edges;
  double min_loss = 1e7;
  train::TrainResult best_training;

  bool stop = false;
  while (!stop && current.size() > 1) {
    double round_best = std::numeric_limits<double>::infinity();
    graph::Edge round_edge;
    train::TrainResult round_training;
    for (const auto& e : current) {  // sorted, deterministic
      graph::EdgeSet candidate = current;
      candidate.erase(e);
      auto tr = train_candidate(g, candidate, data, train_idx, val_idx, cfg);
      res.trace.push_back({candidate, tr.best_val_mse,
                           "remove " + e.first + "->" + e.second});
      if (tr.best_val_mse < round_best) {
        round_best = tr.best_val_mse;
        round_edge = e;
        round_training = std::move(tr);
      }
    }
    if (round_best < min_loss) {
      min_loss = round_best;
      current.erase(round_edge);
      best_training = std::move(round_training);
    } else {
      stop = true;
    }
  }

  res.chosen = graph::with_edges(g, current);
  if (best_training.history.empty()) {
    // no removal ever improved on the 1e7 sentinel's successor; train the full graph
    best_training = train_candidate(g, current, data, train_idx, val_idx, cfg);
  }
  res.chosen_val_loss = min_loss < 1e7 ? min_loss : best_training.best_val_mse;
  res.final_training = std::move(best_training);
  return res;
}

// ---- NeuralSparse ---------------------------------------------------------------

NsSample ns_extract_subgraph(const std::vector<double>& alpha, const Mat& eps) {
  const int E = static_cast<int>(alpha.size());
  const int K = eps.rows;
  if (eps.cols != E) throw ValidationError("ns_extract_subgraph: eps width mismatch");

  // log softmax(alpha)
  double amax = *std::max_element(alpha.begin(), alpha.end());
  double z = 0;
  for (double a : alpha) z += std::exp(a - amax);
  std::vector<double> log_pi(E);
  for (int i = 0; i < E; ++i) log_pi[i] = alpha[i] - amax - std::log(z);

  NsSample out;
  out.w = Mat(K, E);
  std::vector<char> kept(E, 0);
  for (int k = 0; k < K; ++k) {
    // u = exp((log pi - log(-log eps)) * 10), row-normalized in log space
    std::vector<double> logit(E);
    double lmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < E; ++i) {
      double e = eps.at(k, i);
      if (e <= 0 || e >= 1) throw ValidationError("ns_extract_subgraph: eps must lie in (0,1)");
      logit[i] = 10.0 * (log_pi[i] - std::log(-std::log(e)));
      lmax = std::max(lmax, logit[i]);
    }
    double sum = 0;
    for (int i = 0; i < E; ++i) sum += std::exp(logit[i] - lmax);
    for (int i = 0; i < E; ++i) {
      double w = std::exp(logit[i] - lmax) / sum;
      w = std::round(w * 100.0) / 100.0;  // 2 decimal places
      out.w.at(k, i) = w;
      if (w > 0) kept[i] = 1;
    }
  }
  for (int i = 0; i < E; ++i)
    if (kept[i]) out.kept_edges.push_back(i);
  return out;
}

namespace {

// Soft per-edge gates and their alpha-gradient hook for the relaxation phase.
struct NsGates {
  std::vector<double> gate;            // sum over rows of the normalized relaxation
  std::vector<std::vector<double>> w;  // per-row normalized weights
  std::vector<double> pi;
};

NsGates ns_soft_gates(const std::vector<double>& alpha, const Mat& eps) {
  const int E = static_cast<int>(alpha.size());
  const int K = eps.rows;
  NsGates g;
  g.gate.assign(E, 0.0);
  g.w.assign(K, std::vector<double>(E, 0.0));
  g.pi.assign(E, 0.0);

  double amax = *std::max_element(alpha.begin(), alpha.end());
  double z = 0;
  for (double a : alpha) z += std::exp(a - amax);
  std::vector<double> log_pi(E);
  for (int i = 0; i < E; ++i) {
    log_pi[i] = alpha[i] - amax - std::log(z);
    g.pi[i] = std::exp(log_pi[i]);
  }
  for (int k = 0; k < K; ++k) {
    std::vector<double> logit(E);
    double lmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < E; ++i) {
      logit[i] = 10.0 * (log_pi[i] - std::log(-std::log(eps.at(k, i))));
      lmax = std::max(lmax, logit[i]);
    }
    double sum = 0;
    for (int i = 0; i < E; ++i) sum += std::exp(logit[i] - lmax);
    for (int i = 0; i < E; ++i) {
      g.w[k][i] = std::exp(logit[i] - lmax) / sum;
      g.gate[i] += g.w[k][i];
    }
  }
  return g;
}

// d(loss)/d(alpha) from d(loss)/d(gate), through row softmaxes and log softmax(alpha).
std::vector<double> ns_alpha_grad(const NsGates& g, const std::vector<double>& dgate) {
  const int E = static_cast<int>(g.pi.size());
  const int K = static_cast<int>(g.w.size());
  // ds_i = sum_k 10 * w_ki * (dgate_i - sum_j dgate_j w_kj), s = log softmax(alpha)
  std::vector<double> ds(E, 0.0);
  for (int k = 0; k < K; ++k) {
    double dot = 0;
    for (int j = 0; j < E; ++j) dot += dgate[j] * g.w[k][j];
    for (int i = 0; i < E; ++i) ds[i] += 10.0 * g.w[k][i] * (dgate[i] - dot);
  }
  // dalpha_i = ds_i - pi_i * sum_j ds_j
  double total = 0;
  for (int j = 0; j < E; ++j) total += ds[j];
  std::vector<double> da(E);
  for (int i = 0; i < E; ++i) da[i] = ds[i] - g.pi[i] * total;
  return da;
}

Mat draw_eps(Rng& rng, int K, int E) {
  Mat eps(K, E);
  for (auto& v : eps.v) {
    double u = rng.next_double();
    v = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
  }
  return eps;
}

}  // namespace

ReductionResult reduce_neuralsparse(const graph::SuperGraph& g, const data::Dataset& data,
                                    const data::IndexSlice& train_idx,
                                    const data::IndexSlice& val_idx, int K,
                                    const ReduceConfig& cfg, uint64_t sample_seed) {
  const int E = static_cast<int>(g.edges.size());
  if (K < 1 || K > E) throw ValidationError("reduce_neuralsparse: need 1 <= K <= |E|");

  // Phase 1: train alpha jointly with the MLPs through the soft gates.
  mnode::ModelConfig mc = cfg.model;
  mc.weighted = true;  // the gate values ride in the edge-weight slots
  mc.use_sharing = false;
  auto model = mnode::build_model(g, cfg.shape, mc);
  mnode::init_params(model, cfg.tc.seed);
  nn::ParamVector p = model.params;
  nn::ParamVector grad = p.zeros_like();

  Rng rng(sample_seed);
  std::vector<double> alpha(E);
  for (auto& a : alpha) a = rng.normal();

  const auto& wentry = model.layout->find("edges", "w");
  auto set_gates = [&](nn::ParamVector& params, const std::vector<double>& gate) {
    for (int i = 0; i < E; ++i) params.values[wentry.offset + i] = gate[i];
  };

  train::MnodeLoss loss(model, data, train_idx, cfg.lc);
  train::AdamState adam_p, adam_a;
  Mat eval_eps = draw_eps(rng, K, E);  // frozen evaluation sample

  for (int epoch = 1; epoch <= cfg.tc.epochs; ++epoch) {
    Mat eps = draw_eps(rng, K, E);
    auto gates = ns_soft_gates(alpha, eps);
    set_gates(p, gates.gate);
    loss.value_and_grad(p, grad);
    std::vector<double> dgate(grad.values.begin() + wentry.offset,
                              grad.values.begin() + wentry.offset + E);
    auto dalpha = ns_alpha_grad(gates, dgate);
    // gate slots are overwritten every pass; keep Adam off them
    for (int i = 0; i < E; ++i) grad.values[wentry.offset + i] = 0.0;
    train::adam_step(p.values, grad.values, adam_p, cfg.tc.lr);
    train::adam_step(alpha, dalpha, adam_a, cfg.tc.lr);
  }

  // Phase 2: freeze a sample, extract the subgraph (retry on all-zero rounding).
  NsSample sample;
  Mat eps = eval_eps;
  int tries = 0;
  while (true) {
    sample = ns_extract_subgraph(alpha, eps);
    if (!sample.kept_edges.empty()) break;
    if (++tries >= 10)
      throw Error("reduce_neuralsparse: rounding produced an empty subgraph 10 times");
    eps = draw_eps(rng, K, E);
  }
  std::vector<graph::Edge> all_edges(g.edges.begin(), g.edges.end());
  graph::EdgeSet kept;
  for (int i : sample.kept_edges) kept.insert(all_edges[i]);

  // Phase 3: plain MNODE on the sampled subgraph.
  ReductionResult res;
  res.final_training = train_candidate(g, kept, data, train_idx, val_idx, cfg);
  res.chosen = graph::with_edges(g, kept);
  res.chosen_val_loss = res.final_training.best_val_mse;
  res.trace.push_back({kept, res.chosen_val_loss, "K=" + std::to_string(K)});
  return res;
}

}  // namespace hgs::reduce
