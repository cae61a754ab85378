#include "hgs/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hgs::train {

Regularizer regularizer_from_name(const std::string& s) {
  if (s == "hgs-l1l2") return Regularizer::HgsL1L2;
  if (s == "egl") return Regularizer::Egl;
  if (s == "elastic-net") return Regularizer::ElasticNet;
  if (s == "none") return Regularizer::None;
  throw ValidationError("unknown regularizer: " + s);
}

std::string regularizer_name(Regularizer r) {
  switch (r) {
    case Regularizer::HgsL1L2: return "hgs-l1l2";
    case Regularizer::Egl: return "egl";
    case Regularizer::ElasticNet: return "elastic-net";
    case Regularizer::None: return "none";
  }
  return "?";
}

namespace {

inline double sign0(double x) { return x > 0 ? 1.0 : x < 0 ? -1.0 : 0.0; }

// canonical-weight indices that are exempt from penalties
std::vector<char> exempt_mask(const mnode::Model& m, const LossConfig& cfg) {
  std::vector<char> mask(m.canonical_edges.size(), 0);
  for (const auto& e : cfg.exempt_edges) {
    int idx = m.weight_index(e);
    if (idx >= 0) mask[idx] = 1;
  }
  return mask;
}

}  // namespace

double penalty(const mnode::Model& m, const LossConfig& cfg, const nn::ParamVector& p) {
  double pen = 0.0;
  const bool has_w = m.cfg.weighted && !m.canonical_edges.empty();
  const double* w = has_w ? p.slice("edges", "w") : nullptr;

  switch (cfg.regularizer) {
    case Regularizer::None:
      return 0.0;
    case Regularizer::HgsL1L2: {
      if (has_w && cfg.lambda1 != 0) {
        auto mask = exempt_mask(m, cfg);
        for (size_t i = 0; i < m.canonical_edges.size(); ++i)
          if (!mask[i]) pen += cfg.lambda1 * std::fabs(w[i]);
      }
      if (cfg.lambda2 != 0) {
        for (size_t i : m.decoder_indices()) pen += cfg.lambda2 * sq(p.values[i]);
        if (cfg.penalize_encoder)
          for (size_t i : m.encoder_indices()) pen += cfg.lambda2 * sq(p.values[i]);
      }
      return pen;
    }
    case Regularizer::Egl: {
      if (!has_w || cfg.lambda1 == 0) return 0.0;
      // per-target-node group: (sum of |w| over incoming edges)^2
      for (const auto& sn : m.states) {
        double group = 0.0;
        for (const auto& par : sn.parents) group += std::fabs(w[par.weight_idx]);
        pen += cfg.lambda1 * sq(group);
      }
      return pen;
    }
    case Regularizer::ElasticNet: {
      if (!has_w) return 0.0;
      auto mask = exempt_mask(m, cfg);
      for (size_t i = 0; i < m.canonical_edges.size(); ++i)
        if (!mask[i]) pen += cfg.en_lambda1 * std::fabs(w[i]) + cfg.en_lambda2 * sq(w[i]);
      return pen;
    }
  }
  return pen;
}

void penalty_grad(const mnode::Model& m, const LossConfig& cfg, const nn::ParamVector& p,
                  nn::ParamVector& grad) {
  const bool has_w = m.cfg.weighted && !m.canonical_edges.empty();
  const double* w = has_w ? p.slice("edges", "w") : nullptr;
  double* dw = has_w ? grad.slice("edges", "w") : nullptr;

  switch (cfg.regularizer) {
    case Regularizer::None:
      return;
    case Regularizer::HgsL1L2: {
      if (has_w && cfg.lambda1 != 0) {
        auto mask = exempt_mask(m, cfg);
        for (size_t i = 0; i < m.canonical_edges.size(); ++i)
          if (!mask[i]) dw[i] += cfg.lambda1 * sign0(w[i]);
      }
      if (cfg.lambda2 != 0) {
        for (size_t i : m.decoder_indices()) grad.values[i] += 2 * cfg.lambda2 * p.values[i];
        if (cfg.penalize_encoder)
          for (size_t i : m.encoder_indices()) grad.values[i] += 2 * cfg.lambda2 * p.values[i];
      }
      return;
    }
    case Regularizer::Egl: {
      if (!has_w || cfg.lambda1 == 0) return;
      for (const auto& sn : m.states) {
        double group = 0.0;
        for (const auto& par : sn.parents) group += std::fabs(w[par.weight_idx]);
        for (const auto& par : sn.parents)
          dw[par.weight_idx] += cfg.lambda1 * 2 * group * sign0(w[par.weight_idx]);
      }
      return;
    }
    case Regularizer::ElasticNet: {
      if (!has_w) return;
      auto mask = exempt_mask(m, cfg);
      for (size_t i = 0; i < m.canonical_edges.size(); ++i)
        if (!mask[i])
          dw[i] += cfg.en_lambda1 * sign0(w[i]) + 2 * cfg.en_lambda2 * w[i];
      return;
    }
  }
}

MnodeLoss::MnodeLoss(const mnode::Model& model, const data::Dataset& data, data::IndexSlice idx,
                     LossConfig cfg, double data_scale)
    : model_(model), data_(data), idx_(std::move(idx)), cfg_(std::move(cfg)),
      data_scale_(data_scale) {}

double MnodeLoss::data_term(const nn::ParamVector& p) const {
  double sse = 0.0;
  for (int i : idx_) {
    const auto& inst = data_.instances[i];
    Mat preds = mnode::predict(model_, p, inst);
    sse += sq_dist(preds, inst.future_obs);
  }
  return sse;
}

double MnodeLoss::value(const nn::ParamVector& p) const {
  return data_scale_ * data_term(p) + penalty(model_, cfg_, p);
}

double MnodeLoss::value_and_grad(const nn::ParamVector& p, nn::ParamVector& grad) const {
  std::fill(grad.values.begin(), grad.values.end(), 0.0);
  double sse = 0.0;
  mnode::Trace trace;
  for (int i : idx_) {
    const auto& inst = data_.instances[i];
    Mat preds = mnode::predict(model_, p, inst, &trace);
    Mat dpreds(preds.rows, preds.cols);
    for (size_t j = 0; j < preds.v.size(); ++j) {
      double e = preds.v[j] - inst.future_obs.v[j];
      sse += sq(e);
      dpreds.v[j] = 2 * e;
    }
    mnode::backward(model_, p, inst, trace, dpreds, grad);
  }
  if (data_scale_ != 1.0)
    for (auto& v : grad.values) v *= data_scale_;
  double pen = penalty(model_, cfg_, p);
  penalty_grad(model_, cfg_, p, grad);
  return data_scale_ * sse + pen;
}

double validation_mse(const mnode::Model& m, const nn::ParamVector& p, const data::Dataset& data,
                      const data::IndexSlice& idx) {
  if (idx.empty()) return 0.0;
  double sse = 0.0;
  for (int i : idx) {
    const auto& inst = data.instances[i];
    Mat preds = mnode::predict(m, p, inst);
    sse += sq_dist(preds, inst.future_obs);
  }
  return sse / static_cast<double>(idx.size());
}

// ---- group-LASSO equivalence ----------------------------------------------------

double optimal_edge_weight(double gamma_norm, double lambda1, double lambda2) {
  if (lambda1 <= 0) throw ValidationError("optimal_edge_weight: lambda1 must be > 0");
  if (gamma_norm < 0) throw ValidationError("optimal_edge_weight: norm must be >= 0");
  return std::cbrt(2.0 * lambda2 * gamma_norm * gamma_norm / lambda1);
}

double group_lasso_lambda3(double lambda1, double lambda2) {
  return 3.0 * std::pow(2.0, -2.0 / 3.0) * std::pow(lambda1, 2.0 / 3.0) *
         std::pow(lambda2, 1.0 / 3.0);
}

nn::ParamVector reparameterize_unit_weights(const mnode::Model& m, const nn::ParamVector& p) {
  if (!m.cfg.weighted) throw ValidationError("reparameterize: model has no edge weights");
  nn::ParamVector out = p;
  for (const auto& e : m.graph.edges) {
    double w = m.edge_weight(p, e);
    for (size_t i : m.first_layer_indices(e)) out.values[i] = w * p.values[i];
  }
  double* w = out.slice("edges", "w");
  for (size_t i = 0; i < m.canonical_edges.size(); ++i) w[i] = 1.0;
  return out;
}

double group_lasso_penalty(const mnode::Model& m, const nn::ParamVector& unit_p, double lambda2,
                           double lambda3) {
  // Theta_tilde = decoder parameters outside every first-layer edge block
  std::vector<char> in_gamma(unit_p.size(), 0);
  double pen = 0.0;
  for (const auto& e : m.graph.edges) {
    double norm_sq = 0.0;
    for (size_t i : m.first_layer_indices(e)) {
      norm_sq += sq(unit_p.values[i]);
      in_gamma[i] = 1;
    }
    pen += lambda3 * std::pow(norm_sq, 1.0 / 3.0);  // ||Gamma||^(2/3)
  }
  for (size_t i : m.decoder_indices())
    if (!in_gamma[i]) pen += lambda2 * sq(unit_p.values[i]);
  return pen;
}

double group_lasso_loss(const mnode::Model& m, const nn::ParamVector& unit_p,
                        const data::Dataset& data, const data::IndexSlice& idx, double lambda2,
                        double lambda3) {
  double sse = 0.0;
  for (int i : idx) {
    Mat preds = mnode::predict(m, unit_p, data.instances[i]);
    sse += sq_dist(preds, data.instances[i].future_obs);
  }
  return sse + group_lasso_penalty(m, unit_p, lambda2, lambda3);
}

// ---- optimization ------------------------------------------------------------------

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ValidationError("adam_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1 - cfg.beta2) * grads[i] * grads[i];
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

TrainResult train(const mnode::Model& model, const data::Dataset& data,
                  const data::IndexSlice& train_idx, const data::IndexSlice& val_idx,
                  const TrainConfig& tc, const LossConfig& lc) {
  if (tc.epochs < 1) throw ValidationError("train: epochs must be >= 1");
  mnode::Model m = model;  // private parameter copy
  mnode::init_params(m, tc.seed);
  nn::ParamVector p = m.params;
  nn::ParamVector g = p.zeros_like();

  AdamState adam;
  TrainResult res;
  res.best_val_mse = std::numeric_limits<double>::infinity();

  std::vector<int> order(train_idx);
  Rng shuffle_rng(tc.seed ^ 0x5AFF1Eull);
  const size_t batch =
      tc.batch_size > 0 ? static_cast<size_t>(tc.batch_size) : train_idx.size();

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    double train_loss;
    try {
      if (batch < order.size()) {
        for (size_t i = 0; i + 1 < order.size(); ++i) {
          size_t j = i + shuffle_rng.below(order.size() - i);
          std::swap(order[i], order[j]);
        }
      }
      train_loss = 0;
      for (size_t pos = 0; pos < order.size(); pos += batch) {
        data::IndexSlice chunk(order.begin() + pos,
                               order.begin() + std::min(pos + batch, order.size()));
        const auto& probe = data.instances[chunk[0]];
        double entries = static_cast<double>(chunk.size()) * probe.future_obs.rows *
                         probe.future_obs.cols;
        MnodeLoss loss(m, data, chunk, lc, 1.0 / entries);
        train_loss += loss.value_and_grad(p, g);
        if (!std::isfinite(train_loss) || !all_finite(g.values))
          throw NonFiniteError("non-finite loss or gradient");
        adam_step(p.values, g.values, adam, tc.lr);
      }
      double val = validation_mse(m, p, data, val_idx);
      if (!std::isfinite(val)) throw NonFiniteError("non-finite validation loss");
      res.history.push_back({train_loss, val});
      if (val < res.best_val_mse) {
        res.best_val_mse = val;
        res.best_epoch = epoch;
        res.params = p;
      }
    } catch (const NonFiniteError& e) {
      std::string trace;
      size_t from = res.history.size() > 5 ? res.history.size() - 5 : 0;
      for (size_t i = from; i < res.history.size(); ++i)
        trace += " epoch " + std::to_string(i + 1) + ": train=" +
                 std::to_string(res.history[i].train_loss) +
                 " val=" + std::to_string(res.history[i].val_mse) + ";";
      throw NonFiniteError("training aborted at epoch " + std::to_string(epoch) + ": " +
                           e.what() + "; recent history:" + trace);
    }
  }
  return res;
}

std::vector<data::IndexSlice> kfold_splits(int n, int k,
                                           const std::optional<std::vector<int>>& perm) {
  if (k < 2 || n < k) throw ValidationError("kfold_splits: need 2 <= K <= n");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  if (perm) {
    if (static_cast<int>(perm->size()) != n)
      throw ValidationError("kfold_splits: permutation size mismatch");
    order = *perm;
  }
  std::vector<data::IndexSlice> folds(k);
  // contiguous index blocks; the first n % k folds take the extra element
  int base = n / k, extra = n % k, pos = 0;
  for (int f = 0; f < k; ++f) {
    int len = base + (f < extra ? 1 : 0);
    for (int i = 0; i < len; ++i) folds[f].push_back(order[pos++]);
  }
  return folds;
}

CvResult grid_search_cv(const mnode::Model& model, const data::Dataset& data,
                        const std::vector<GridPoint>& grid, const CvConfig& cfg) {
  if (grid.empty()) throw ValidationError("grid_search_cv: empty grid");
  auto folds = kfold_splits(static_cast<int>(data.size()), cfg.folds, cfg.permutation);

  CvResult res;
  res.report.fold_val_mse.assign(grid.size(), std::vector<double>(cfg.folds, 0.0));
  res.report.mean_val_mse.assign(grid.size(), 0.0);

  for (size_t gi = 0; gi < grid.size(); ++gi) {
    double mean = 0.0;
    for (int f = 0; f < cfg.folds; ++f) {
      data::IndexSlice train_idx;
      for (int o = 0; o < cfg.folds; ++o)
        if (o != f) train_idx.insert(train_idx.end(), folds[o].begin(), folds[o].end());
      TrainConfig tc{cfg.epochs, grid[gi].lr, cfg.seed, cfg.batch_size};
      double fold_val;
      try {
        fold_val = train(model, data, train_idx, folds[f], tc, grid[gi].loss).best_val_mse;
      } catch (const NonFiniteError&) {
        // a diverged configuration loses the selection instead of killing it
        fold_val = std::numeric_limits<double>::infinity();
      }
      res.report.fold_val_mse[gi][f] = fold_val;
      mean += fold_val;
    }
    res.report.mean_val_mse[gi] = mean / cfg.folds;
  }
  bool any_finite = false;
  for (double v : res.report.mean_val_mse) any_finite |= std::isfinite(v);
  if (!any_finite) throw NonFiniteError("grid_search_cv: every grid point diverged");

  res.report.selected = static_cast<int>(
      std::min_element(res.report.mean_val_mse.begin(), res.report.mean_val_mse.end()) -
      res.report.mean_val_mse.begin());

  // the first split retrains the final model
  data::IndexSlice train_idx;
  for (int o = 1; o < cfg.folds; ++o)
    train_idx.insert(train_idx.end(), folds[o].begin(), folds[o].end());
  const auto& best = grid[res.report.selected];
  TrainConfig tc{cfg.epochs, best.lr, cfg.seed, cfg.batch_size};
  res.final_training = train(model, data, train_idx, folds[0], tc, best.loss);
  res.params = res.final_training.params;
  return res;
}

int enp(const nn::ParamVector& p, double threshold) {
  if (threshold <= 0) throw ValidationError("enp: threshold must be > 0");
  int n = 0;
  for (double x : p.values) n += std::fabs(x) > threshold;
  return n;
}

}  // namespace hgs::train
