#pragma once

#include <complex>
#include <vector>

#include "hgs/core.hpp"

namespace hgs::eval {

/// Point metrics over a set of prediction/target trajectory pairs.
struct MetricReport {
  double rmse = 0;        // per-entry root mean square
  double mape = 0;        // |pred-true|/|true|, zero targets excluded
  double peak_rmse = 0;   // max over instances of per-instance RMSE
  double peak_mape = 0;
  double pearson_corr = 0;
  double diag_accuracy = 0;  // glycemic-class agreement
  int mape_excluded = 0;     // zero-target points dropped from MAPE
  int instances = 0;
};

struct ClassThresholds {
  double hypo = 80.0;   // class boundaries land in the extreme classes
  double hyper = 180.0;
};

MetricReport metrics(const std::vector<Mat>& predictions, const std::vector<Mat>& targets,
                     const ClassThresholds& thresholds = {});

/// Per-repetition test RMSE: sqrt(mean over instances of the squared L2
/// error over the whole prediction window).
double test_rmse(const std::vector<Mat>& predictions, const std::vector<Mat>& targets);

struct MeanSe {
  double mean = 0;
  double se = 0;  // sample SD / sqrt(K)
};

/// Monte Carlo mean and 1-sigma standard error over repetitions.
MeanSe monte_carlo_se(const std::vector<double>& per_rep_values);

// ---- modified K-fold estimators -------------------------------------------------

/// One held-out case: its fold, target, and the predictions of the K-1
/// models whose training data excluded this fold (ascending model index).
struct CvCase {
  int fold = 0;
  Mat target;
  std::vector<Mat> predictions;
};

struct CvEstimates {
  double variance = 0;
  double bias_sq = 0;
  double mse = 0;
  double rmse = 0;
};

/// The displayed variance / squared-bias / pooled-MSE estimators; K >= 3
/// (each case needs at least two models). variance + bias_sq = mse exactly.
CvEstimates cv_variance_bias(const std::vector<CvCase>& cases, int K);

// ---- cycle stability ---------------------------------------------------------------

struct StabilityReport {
  std::complex<double> lambda_plus, lambda_minus;  // eigenvalues of [[a,b],[c,d]]
  bool blow_up = false;   // spectral radius of (hJ + I) > 1
  double kappa = 1.0;     // fastest/slowest stable rate; +inf when unstable
  double spectral_radius_step = 0;  // of (hJ + I)
};

/// Eigenvalues of the 2-state Jacobian, forward-Euler blow-up test at step h,
/// and the stiffness ratio.
StabilityReport stability_analyze(double a, double b, double c, double d, double h);

}  // namespace hgs::eval
