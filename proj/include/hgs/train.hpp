#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hgs/dataset.hpp"
#include "hgs/mnode.hpp"
#include "hgs/nn.hpp"

namespace hgs::train {

enum class Regularizer { HgsL1L2, Egl, ElasticNet, None };

Regularizer regularizer_from_name(const std::string& s);
std::string regularizer_name(Regularizer r);

struct LossConfig {
  Regularizer regularizer = Regularizer::HgsL1L2;
  double lambda1 = 0.0;  // L1 on edge weights (HGS) or the EGL group coefficient
  double lambda2 = 0.0;  // L2 on decoder parameters (HGS)
  double en_lambda1 = 0.0, en_lambda2 = 0.0;  // elastic net on edge weights
  std::set<graph::Edge> exempt_edges;         // excluded from the penalty sum only
  bool penalize_encoder = false;
};

/// Sum over instances and horizons of squared error on observables, plus the
/// active penalty. Shared edge weights are read once each by the penalty.
/// `data_scale` rescales the squared-error term only; the optimizer trains
/// against the mean convention (scale = 1/#entries), which is what the
/// published lambda grids are calibrated against.
class MnodeLoss : public nn::LossFunction {
 public:
  MnodeLoss(const mnode::Model& model, const data::Dataset& data, data::IndexSlice idx,
            LossConfig cfg, double data_scale = 1.0);
  double value(const nn::ParamVector& p) const override;
  double value_and_grad(const nn::ParamVector& p, nn::ParamVector& grad) const override;
  double data_term(const nn::ParamVector& p) const;  // squared-error sum only

 private:
  const mnode::Model& model_;
  const data::Dataset& data_;
  data::IndexSlice idx_;
  LossConfig cfg_;
  double data_scale_ = 1.0;
};

double penalty(const mnode::Model& m, const LossConfig& cfg, const nn::ParamVector& p);
void penalty_grad(const mnode::Model& m, const LossConfig& cfg, const nn::ParamVector& p,
                  nn::ParamVector& grad);

/// Mean over instances of the squared L2 prediction error over the window
/// (penalties excluded); the epoch-selection criterion.
double validation_mse(const mnode::Model& m, const nn::ParamVector& p, const data::Dataset& data,
                      const data::IndexSlice& idx);

// ---- group-LASSO equivalence machinery ---------------------------------------

/// Closed-form minimizer of lambda1*w + lambda2*gamma_norm^2/w^2 over w > 0.
double optimal_edge_weight(double gamma_norm, double lambda1, double lambda2);

/// lambda3 = 3 * 2^(-2/3) * lambda1^(2/3) * lambda2^(1/3).
double group_lasso_lambda3(double lambda1, double lambda2);

/// Fold the edge weights into the first-layer columns (Gamma = w * Theta_(u,v))
/// and reset all weights to 1; predictions are unchanged.
nn::ParamVector reparameterize_unit_weights(const mnode::Model& m, const nn::ParamVector& p);

/// lambda2*||Theta_tilde||^2 + lambda3 * sum_e ||Gamma_e||^(2/3) over the
/// graph's edges, for a unit-weight (reparameterized) parameter vector.
double group_lasso_penalty(const mnode::Model& m, const nn::ParamVector& unit_p, double lambda2,
                           double lambda3);

double group_lasso_loss(const mnode::Model& m, const nn::ParamVector& unit_p,
                        const data::Dataset& data, const data::IndexSlice& idx, double lambda2,
                        double lambda3);

// ---- optimization -----------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  long t = 0;
};

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr, const AdamConfig& cfg = {});

struct TrainConfig {
  int epochs = 600;
  double lr = 1e-2;
  uint64_t seed = 2024;  // parameter-initialization and shuffle seed
  int batch_size = 32;   // 0 trains full-batch; shuffling is seeded, so runs replay
};

struct EpochStats {
  double train_loss = 0;
  double val_mse = 0;
};

struct TrainResult {
  nn::ParamVector params;  // snapshot at the best-validation epoch
  int best_epoch = 0;
  double best_val_mse = 0;
  std::vector<EpochStats> history;
};

/// Full-batch Adam for `epochs` epochs; initializes parameters from the seed,
/// snapshots the epoch with minimal validation MSE. Deterministic under seed.
TrainResult train(const mnode::Model& model, const data::Dataset& data,
                  const data::IndexSlice& train_idx, const data::IndexSlice& val_idx,
                  const TrainConfig& tc, const LossConfig& lc);

// ---- cross-validated grid search ----------------------------------------------

struct GridPoint {
  LossConfig loss;
  double lr = 1e-3;
  int k_edges = 0;  // NeuralSparse subgraph size; unused elsewhere
};

struct CvConfig {
  int folds = 4;
  int epochs = 600;
  uint64_t seed = 2024;
  int batch_size = 32;
  std::optional<std::vector<int>> permutation;  // applied before the index split
};

struct CvReport {
  std::vector<std::vector<double>> fold_val_mse;  // [grid point][fold]
  std::vector<double> mean_val_mse;
  int selected = -1;
};

struct CvResult {
  nn::ParamVector params;  // final model, retrained on the first split
  CvReport report;
  TrainResult final_training;
};

/// Index-based K-fold split into contiguous blocks (after the optional stored
/// permutation). Selects the grid point with lowest mean validation MSE and
/// retrains on the first split.
CvResult grid_search_cv(const mnode::Model& model, const data::Dataset& data,
                        const std::vector<GridPoint>& grid, const CvConfig& cfg);

std::vector<data::IndexSlice> kfold_splits(int n, int k,
                                           const std::optional<std::vector<int>>& perm = {});

/// Count of parameters with |value| > threshold over the whole vector
/// (decoder, edge weights and encoder jointly).
int enp(const nn::ParamVector& p, double threshold = 1e-3);

}  // namespace hgs::train
