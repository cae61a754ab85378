#include "hgs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hgs::eval {

namespace {

int glycemic_class(double v, const ClassThresholds& th) {
  if (v <= th.hypo) return -1;
  if (v >= th.hyper) return 1;
  return 0;
}

}  // namespace

MetricReport metrics(const std::vector<Mat>& predictions, const std::vector<Mat>& targets,
                     const ClassThresholds& th) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw ValidationError("metrics: prediction/target count mismatch");

  MetricReport r;
  r.instances = static_cast<int>(predictions.size());
  double sse = 0, mape_sum = 0;
  long n_points = 0, mape_points = 0;
  double sum_p = 0, sum_t = 0, sum_pp = 0, sum_tt = 0, sum_pt = 0;
  long class_hits = 0;

  for (size_t k = 0; k < predictions.size(); ++k) {
    const Mat& p = predictions[k];
    const Mat& t = targets[k];
    if (!p.same_shape(t)) throw ValidationError("metrics: shape mismatch at instance");
    double inst_sse = 0, inst_mape = 0;
    long inst_mape_n = 0;
    for (size_t i = 0; i < p.v.size(); ++i) {
      double e = p.v[i] - t.v[i];
      inst_sse += sq(e);
      if (t.v[i] != 0.0) {
        inst_mape += std::fabs(e) / std::fabs(t.v[i]);
        ++inst_mape_n;
      } else {
        ++r.mape_excluded;
      }
      sum_p += p.v[i];
      sum_t += t.v[i];
      sum_pp += sq(p.v[i]);
      sum_tt += sq(t.v[i]);
      sum_pt += p.v[i] * t.v[i];
      class_hits += glycemic_class(p.v[i], th) == glycemic_class(t.v[i], th);
    }
    n_points += static_cast<long>(p.v.size());
    mape_points += inst_mape_n;
    sse += inst_sse;
    mape_sum += inst_mape;
    r.peak_rmse = std::max(r.peak_rmse, std::sqrt(inst_sse / p.v.size()));
    if (inst_mape_n > 0) r.peak_mape = std::max(r.peak_mape, inst_mape / inst_mape_n);
  }

  r.rmse = std::sqrt(sse / n_points);
  r.mape = mape_points > 0 ? mape_sum / mape_points : 0.0;
  double n = static_cast<double>(n_points);
  double cov = sum_pt / n - (sum_p / n) * (sum_t / n);
  double var_p = sum_pp / n - sq(sum_p / n);
  double var_t = sum_tt / n - sq(sum_t / n);
  r.pearson_corr = var_p > 0 && var_t > 0 ? cov / std::sqrt(var_p * var_t) : 0.0;
  r.diag_accuracy = static_cast<double>(class_hits) / n;
  return r;
}

double test_rmse(const std::vector<Mat>& predictions, const std::vector<Mat>& targets) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw ValidationError("test_rmse: prediction/target count mismatch");
  double acc = 0;
  for (size_t k = 0; k < predictions.size(); ++k) acc += sq_dist(predictions[k], targets[k]);
  return std::sqrt(acc / predictions.size());
}

MeanSe monte_carlo_se(const std::vector<double>& vals) {
  MeanSe r;
  const size_t k = vals.size();
  if (k == 0) return r;
  for (double v : vals) r.mean += v;
  r.mean /= k;
  if (k >= 2) {
    double ss = 0;
    for (double v : vals) ss += sq(v - r.mean);
    r.se = std::sqrt(ss / (k * (k - 1.0)));
  }
  return r;
}

CvEstimates cv_variance_bias(const std::vector<CvCase>& cases, int K) {
  if (K < 3) throw ValidationError("cv_variance_bias: K must be >= 3 (two models per case)");
  if (cases.empty()) throw ValidationError("cv_variance_bias: no cases");
  const size_t models = static_cast<size_t>(K - 1);
  CvEstimates est;
  for (const auto& c : cases) {
    if (c.predictions.size() != models)
      throw ValidationError("cv_variance_bias: each case needs K-1 model predictions");
    Mat mean(c.target.rows, c.target.cols, 0.0);
    for (const auto& p : c.predictions)
      for (size_t i = 0; i < mean.v.size(); ++i) mean.v[i] += p.v[i] / models;
    double var_case = 0, mse_case = 0;
    for (const auto& p : c.predictions) {
      var_case += sq_dist(p, mean);
      mse_case += sq_dist(p, c.target);
    }
    est.variance += var_case / models;
    est.bias_sq += sq_dist(mean, c.target);
    est.mse += mse_case / models;
  }
  est.variance /= cases.size();
  est.bias_sq /= cases.size();
  est.mse /= cases.size();
  est.rmse = std::sqrt(est.mse);
  // sum-of-squares identity, checked on every call
  if (std::fabs(est.variance + est.bias_sq - est.mse) > 1e-10 * (est.mse + 1.0))
    throw Error("cv_variance_bias: variance + bias^2 != mse beyond tolerance");
  return est;
}

StabilityReport stability_analyze(double a, double b, double c, double d, double h) {
  StabilityReport r;
  double tr = a + d;
  double disc = sq(a - d) + 4 * b * c;
  if (disc >= 0) {
    double root = std::sqrt(disc);
    r.lambda_plus = {(tr + root) / 2, 0};
    r.lambda_minus = {(tr - root) / 2, 0};
  } else {
    double root = std::sqrt(-disc);
    r.lambda_plus = {tr / 2, root / 2};
    r.lambda_minus = {tr / 2, -root / 2};
  }
  double rho = std::max(std::abs(1.0 + h * r.lambda_plus), std::abs(1.0 + h * r.lambda_minus));
  r.spectral_radius_step = rho;
  r.blow_up = rho > 1.0;

  if (r.lambda_plus.real() < 0 && r.lambda_minus.real() < 0) {
    double hi = std::max(std::abs(r.lambda_plus), std::abs(r.lambda_minus));
    double lo = std::min(std::abs(r.lambda_plus), std::abs(r.lambda_minus));
    r.kappa = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
  } else {
    r.kappa = std::numeric_limits<double>::infinity();
  }
  return r;
}

}  // namespace hgs::eval
