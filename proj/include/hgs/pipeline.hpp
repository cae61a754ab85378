#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hgs/data.hpp"
#include "hgs/eval.hpp"
#include "hgs/graph.hpp"
#include "hgs/mnode.hpp"
#include "hgs/reduce.hpp"
#include "hgs/train.hpp"

namespace hgs::pipeline {

enum class Method { HGS, NR, EGL, EN, NS, GD, RD };

Method method_from_name(const std::string& s);
std::string method_name(Method m);

/// Per-channel affine standardization fitted on training data; predictions
/// are mapped back before metrics are computed.
struct Normalizer {
  bool active = false;
  std::vector<double> obs_mean, obs_sd, in_mean, in_sd;

  data::Dataset apply(const data::Dataset& d) const;
  Mat denorm_obs(Mat m) const;
};

Normalizer fit_normalizer(const data::Dataset& d, const data::IndexSlice& idx);

struct MethodConfig {
  Method method = Method::HGS;
  std::vector<train::GridPoint> grid;
  int folds = 4;
  int epochs = 600;
  int batch_size = 32;
  uint64_t seed = 2024;
  std::optional<std::vector<int>> permutation;
  bool normalize = false;
  mnode::ModelConfig base_model;  // delta_t / time_input / guard template
  int rd_count = 5;
  std::vector<double> rd_ratios = {0.1, 0.2, 0.4};
  graph::CondenseOptions condense;  // HGS step-1 customization
  graph::AugmentOptions augment;    // HGS step-2 customization
};

struct MethodRun {
  Method method = Method::HGS;
  mnode::Model model;  // trained parameters in model.params
  Normalizer norm;
  graph::SuperGraph used_graph;
  train::CvReport cv;
  train::GridPoint selected;
  double final_val_mse = 0;  // on the retraining split, normalized scale
  int best_epoch = 0;
};

/// Applies the method's graph transformation, tunes on the grid (K-fold CV
/// when the grid has several points, the first split otherwise) and returns
/// the final trained model.
MethodRun run_method(const graph::MechGraph& mech, const data::Dataset& train_data,
                     const MethodConfig& cfg);

/// Prediction in the dataset's original units.
Mat predict(const MethodRun& run, const data::Instance& inst);

/// Hyper-parameter axes as listed in the shipped grid files; expansion order
/// is the cartesian product with the learning rate varying fastest.
struct GridSpec {
  std::vector<double> lambda1, lambda2, lr;
  std::vector<double> en_lambda1, en_lambda2;
  std::vector<int> k_edges;
};

std::vector<train::GridPoint> expand_grid(Method m, const GridSpec& spec);

/// Trained-model file: method, model checkpoint, normalizer, selected config.
std::string save_trained(const MethodRun& run);
MethodRun load_trained(const std::string& text);

/// One row of the per-method, per-repetition report.
struct RepetitionRow {
  std::string method;
  int rep = 0;
  double test_rmse = 0;  // sqrt(mean per-instance squared L2 over the window)
  double rmse = 0;       // per-entry RMS
  double peak_rmse = 0;
  double mape = 0;
  double peak_mape = 0;
  double corr = 0;
  double diag_accuracy = 0;
  int enp = 0;
  double val_rmse = 0;
  double weights_below_1e3 = 0;  // fraction of edge weights under the ENP threshold
  int best_epoch = 0;
  double sel_lambda1 = 0, sel_lambda2 = 0, sel_lr = 0;
  int sel_k = 0;
};

RepetitionRow evaluate_run(const MethodRun& run, const data::Dataset& test, int rep);

std::string report_csv(const std::vector<RepetitionRow>& rows);
std::string report_summary_json(const std::vector<RepetitionRow>& rows);

// ---- experiment presets --------------------------------------------------------------

struct SyntheticExperimentSpec {
  graph::SynthGraphKind kind = graph::SynthGraphKind::Refined;
  graph::SparsityRegime regime = graph::SparsityRegime::TrueSparsity;
  int train_size = 100;
  int test_size = 10000;
  int repetitions = 5;
  int folds = 4;
  int epochs = 600;
  int batch_size = 32;
  uint64_t train_seed_base = 10000;
  uint64_t test_seed = 90000;
  uint64_t init_seed_base = 2024;
  std::vector<Method> methods = {Method::HGS, Method::NR};
  std::map<std::string, std::vector<train::GridPoint>> grids;  // keyed by method name
};

std::vector<RepetitionRow> run_synthetic_experiment(const SyntheticExperimentSpec& spec,
                                                    bool verbose = false);

struct UvaExperimentSpec {
  int cohort_size = 50;
  uint64_t cohort_seed = 7;
  int epochs = 2000;
  int batch_size = 4;
  double lr = 3e-3;
  double hgs_lambda1 = 1e-5;
  double lambda2 = 1e-6;
  int folds = 5;
  uint64_t init_seed = 2024;
};

struct UvaExperimentResult {
  std::vector<RepetitionRow> rows;  // HGS and NR
  bool rdag_ok = false;
  bool gp_gt_collapsed = false;
};

UvaExperimentResult run_uva_experiment(const UvaExperimentSpec& spec, bool verbose = false);

}  // namespace hgs::pipeline
