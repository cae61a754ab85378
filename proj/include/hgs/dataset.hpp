#pragma once

#include <string>
#include <vector>

#include "hgs/core.hpp"

namespace hgs::data {

/// One forecasting case on a uniform grid: p+1 rows of observed history
/// (t_-p..t_0), p rows of past inputs (t_-p..t_-1), q rows of future inputs
/// (t_0..t_{q-1}) and q rows of targets (t_1..t_q).
struct Instance {
  Mat past_obs;       // (p+1) x |S_obs|
  Mat past_inputs;    // p x m
  Mat future_inputs;  // q x m
  Mat future_obs;     // q x |S_obs|
  double t0 = 0.0;
  double dt = 1.0;

  int p() const { return past_obs.rows - 1; }
  int q() const { return future_inputs.rows; }
};

struct DatasetMeta {
  std::vector<std::string> obs_channels;
  std::vector<std::string> input_channels;
  double dt = 1.0;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Instance> instances;

  size_t size() const { return instances.size(); }
};

/// Index view of a dataset slice (folds, train/val splits).
using IndexSlice = std::vector<int>;

inline IndexSlice all_indices(const Dataset& d) {
  IndexSlice idx(d.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return idx;
}

}  // namespace hgs::data
