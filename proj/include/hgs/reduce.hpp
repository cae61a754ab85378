#pragma once

#include <string>
#include <vector>

#include "hgs/dataset.hpp"
#include "hgs/graph.hpp"
#include "hgs/mnode.hpp"
#include "hgs/train.hpp"

namespace hgs::reduce {

struct CandidateRecord {
  graph::EdgeSet edges;
  double val_loss = 0;
  std::string note;
};

struct ReductionResult {
  graph::SuperGraph chosen;  // same node set, restricted edges
  double chosen_val_loss = 0;
  std::vector<CandidateRecord> trace;
  train::TrainResult final_training;  // trained model on the chosen subgraph
};

struct ReduceConfig {
  mnode::ModelConfig model;  // typically weighted = false (plain MNODE per candidate)
  mnode::DataShape shape;
  train::TrainConfig tc;
  train::LossConfig lc;
};

/// For each ratio p, samples R uniform edge subsets of size ceil((1-p)|E|),
/// trains each from scratch and returns the validation-loss minimizer.
ReductionResult reduce_random(const graph::SuperGraph& g, const data::Dataset& data,
                              const data::IndexSlice& train_idx, const data::IndexSlice& val_idx,
                              int R, const std::vector<double>& ratios, const ReduceConfig& cfg,
                              uint64_t sample_seed);

/// Backward stepwise deletion: each round evaluates every single-edge removal,
/// accepts the best strictly-improving one (MinLoss starts at 1e7), stops when
/// nothing improves.
ReductionResult reduce_greedy(const graph::SuperGraph& g, const data::Dataset& data,
                              const data::IndexSlice& train_idx, const data::IndexSlice& val_idx,
                              const ReduceConfig& cfg);

/// Learnable edge logits with a sharp Gumbel-style relaxation
/// (exp((log pi - log(-log eps)) * 10), row-normalized): epsilon is resampled
/// every forward pass during training and frozen for subgraph extraction,
/// where rows are rounded to 2 decimals and positive entries keep their edge.
ReductionResult reduce_neuralsparse(const graph::SuperGraph& g, const data::Dataset& data,
                                    const data::IndexSlice& train_idx,
                                    const data::IndexSlice& val_idx, int K,
                                    const ReduceConfig& cfg, uint64_t sample_seed);

/// Subgraph extraction used by NeuralSparse: row-normalize the relaxation,
/// round to 2 decimals, keep edges positive in any row.
struct NsSample {
  Mat w;  // K x |E| after normalization and rounding
  std::vector<int> kept_edges;
};
NsSample ns_extract_subgraph(const std::vector<double>& alpha, const Mat& eps);

}  // namespace hgs::reduce
