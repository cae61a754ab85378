#include "hgs/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "hgs/parallel.hpp"
#include "json.hpp"

namespace hgs::pipeline {

Method method_from_name(const std::string& s) {
  if (s == "HGS") return Method::HGS;
  if (s == "NR") return Method::NR;
  if (s == "EGL") return Method::EGL;
  if (s == "EN") return Method::EN;
  if (s == "NS") return Method::NS;
  if (s == "GD") return Method::GD;
  if (s == "RD") return Method::RD;
  throw ValidationError("unknown method '" + s + "' (valid: HGS, NR, EGL, EN, NS, GD, RD)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::HGS: return "HGS";
    case Method::NR: return "NR";
    case Method::EGL: return "EGL";
    case Method::EN: return "EN";
    case Method::NS: return "NS";
    case Method::GD: return "GD";
    case Method::RD: return "RD";
  }
  return "?";
}

// ---- normalization ------------------------------------------------------------------

Normalizer fit_normalizer(const data::Dataset& d, const data::IndexSlice& idx) {
  Normalizer n;
  n.active = true;
  if (idx.empty() || d.instances.empty()) throw ValidationError("fit_normalizer: empty data");
  int obs_cols = d.instances[0].future_obs.cols;
  int in_cols = d.instances[0].future_inputs.cols;
  n.obs_mean.assign(obs_cols, 0.0);
  n.obs_sd.assign(obs_cols, 0.0);
  n.in_mean.assign(in_cols, 0.0);
  n.in_sd.assign(in_cols, 0.0);

  std::vector<long> obs_n(obs_cols, 0), in_n(in_cols, 0);
  std::vector<double> obs_ss(obs_cols, 0.0), in_ss(in_cols, 0.0);
  for (int i : idx) {
    const auto& inst = d.instances[i];
    for (const Mat* m : {&inst.past_obs, &inst.future_obs})
      for (int r = 0; r < m->rows; ++r)
        for (int c = 0; c < m->cols; ++c) {
          n.obs_mean[c] += m->at(r, c);
          obs_ss[c] += sq(m->at(r, c));
          ++obs_n[c];
        }
    for (const Mat* m : {&inst.past_inputs, &inst.future_inputs})
      for (int r = 0; r < m->rows; ++r)
        for (int c = 0; c < m->cols; ++c) {
          n.in_mean[c] += m->at(r, c);
          in_ss[c] += sq(m->at(r, c));
          ++in_n[c];
        }
  }
  for (int c = 0; c < obs_cols; ++c) {
    n.obs_mean[c] /= obs_n[c];
    double var = obs_ss[c] / obs_n[c] - sq(n.obs_mean[c]);
    n.obs_sd[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  for (int c = 0; c < in_cols; ++c) {
    n.in_mean[c] = in_n[c] ? n.in_mean[c] / in_n[c] : 0.0;
    double var = in_n[c] ? in_ss[c] / in_n[c] - sq(n.in_mean[c]) : 0.0;
    n.in_sd[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return n;
}

data::Dataset Normalizer::apply(const data::Dataset& d) const {
  if (!active) return d;
  data::Dataset out = d;
  for (auto& inst : out.instances) {
    for (Mat* m : {&inst.past_obs, &inst.future_obs})
      for (int r = 0; r < m->rows; ++r)
        for (int c = 0; c < m->cols; ++c) m->at(r, c) = (m->at(r, c) - obs_mean[c]) / obs_sd[c];
    for (Mat* m : {&inst.past_inputs, &inst.future_inputs})
      for (int r = 0; r < m->rows; ++r)
        for (int c = 0; c < m->cols; ++c) m->at(r, c) = (m->at(r, c) - in_mean[c]) / in_sd[c];
  }
  return out;
}

Mat Normalizer::denorm_obs(Mat m) const {
  if (!active) return m;
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) m.at(r, c) = m.at(r, c) * obs_sd[c] + obs_mean[c];
  return m;
}

// ---- method dispatch ---------------------------------------------------------------

namespace {

mnode::DataShape shape_of(const data::Dataset& d) {
  if (d.instances.empty()) throw ValidationError("empty dataset");
  mnode::DataShape s;
  s.p = d.instances[0].p();
  s.obs_cols = d.instances[0].future_obs.cols;
  s.input_cols = d.instances[0].future_inputs.cols;
  s.input_channels = d.meta.input_channels;
  return s;
}

graph::SuperGraph method_graph(Method m, const graph::MechGraph& mech, const MethodConfig& cfg) {
  if (m == Method::HGS) return graph::augment(graph::condense(mech, cfg.condense), cfg.augment);
  return graph::lift(mech);
}

bool method_weighted(Method m) {
  return m == Method::HGS || m == Method::EGL || m == Method::EN;
}

}  // namespace

MethodRun run_method(const graph::MechGraph& mech, const data::Dataset& train_data,
                     const MethodConfig& cfg) {
  if (cfg.grid.empty()) throw ValidationError("run_method: empty grid");
  MethodRun out;
  out.method = cfg.method;
  out.used_graph = method_graph(cfg.method, mech, cfg);

  out.norm.active = false;
  data::Dataset local = train_data;
  if (cfg.normalize) {
    out.norm = fit_normalizer(train_data, data::all_indices(train_data));
    local = out.norm.apply(train_data);
  }

  mnode::ModelConfig mc = cfg.base_model;
  mc.weighted = method_weighted(cfg.method);
  auto model = mnode::build_model(out.used_graph, shape_of(local), mc);

  auto folds = train::kfold_splits(static_cast<int>(local.size()), cfg.folds, cfg.permutation);
  data::IndexSlice first_train, first_val = folds[0];
  for (int f = 1; f < cfg.folds; ++f)
    first_train.insert(first_train.end(), folds[f].begin(), folds[f].end());

  switch (cfg.method) {
    case Method::HGS:
    case Method::NR:
    case Method::EGL:
    case Method::EN: {
      if (cfg.grid.size() == 1) {
        train::TrainConfig tc{cfg.epochs, cfg.grid[0].lr, cfg.seed, cfg.batch_size};
        auto r = train::train(model, local, first_train, first_val, tc, cfg.grid[0].loss);
        out.cv.selected = 0;
        out.cv.mean_val_mse = {r.best_val_mse};
        out.selected = cfg.grid[0];
        out.final_val_mse = r.best_val_mse;
        out.best_epoch = r.best_epoch;
        model.params = r.params;
      } else {
        train::CvConfig cv{cfg.folds, cfg.epochs, cfg.seed, cfg.batch_size, cfg.permutation};
        auto r = train::grid_search_cv(model, local, cfg.grid, cv);
        out.cv = r.report;
        out.selected = cfg.grid[r.report.selected];
        out.final_val_mse = r.final_training.best_val_mse;
        out.best_epoch = r.final_training.best_epoch;
        model.params = r.params;
      }
      break;
    }
    case Method::NS: {
      reduce::ReduceConfig rc;
      rc.model = mc;
      rc.shape = shape_of(local);
      rc.lc = cfg.grid[0].loss;
      rc.tc = {cfg.epochs, cfg.grid[0].lr, cfg.seed, cfg.batch_size};
      int best = -1;
      double best_mse = std::numeric_limits<double>::infinity();
      out.cv.fold_val_mse.assign(cfg.grid.size(), {});
      out.cv.mean_val_mse.assign(cfg.grid.size(), 0.0);
      if (cfg.grid.size() > 1) {
        for (size_t gi = 0; gi < cfg.grid.size(); ++gi) {
          double mean = 0;
          for (int f = 0; f < cfg.folds; ++f) {
            data::IndexSlice tr;
            for (int o = 0; o < cfg.folds; ++o)
              if (o != f) tr.insert(tr.end(), folds[o].begin(), folds[o].end());
            reduce::ReduceConfig c = rc;
            c.lc = cfg.grid[gi].loss;
            c.tc.lr = cfg.grid[gi].lr;
            auto rr = reduce::reduce_neuralsparse(out.used_graph, local, tr, folds[f],
                                                  cfg.grid[gi].k_edges, c, cfg.seed + 17 * f);
            out.cv.fold_val_mse[gi].push_back(rr.chosen_val_loss);
            mean += rr.chosen_val_loss;
          }
          out.cv.mean_val_mse[gi] = mean / cfg.folds;
          if (out.cv.mean_val_mse[gi] < best_mse) {
            best_mse = out.cv.mean_val_mse[gi];
            best = static_cast<int>(gi);
          }
        }
      } else {
        best = 0;
      }
      reduce::ReduceConfig c = rc;
      c.lc = cfg.grid[best].loss;
      c.tc.lr = cfg.grid[best].lr;
      auto rr = reduce::reduce_neuralsparse(out.used_graph, local, first_train, first_val,
                                            cfg.grid[best].k_edges, c, cfg.seed);
      out.cv.selected = best;
      out.selected = cfg.grid[best];
      out.final_val_mse = rr.chosen_val_loss;
      out.best_epoch = rr.final_training.best_epoch;
      out.used_graph = rr.chosen;
      model = mnode::build_model(rr.chosen, shape_of(local), mc);
      model.params = rr.final_training.params;
      break;
    }
    case Method::GD:
    case Method::RD: {
      reduce::ReduceConfig rc;
      rc.model = mc;
      rc.shape = shape_of(local);
      rc.lc = cfg.grid[0].loss;
      rc.tc = {cfg.epochs, cfg.grid[0].lr, cfg.seed, cfg.batch_size};
      reduce::ReductionResult rr =
          cfg.method == Method::GD
              ? reduce::reduce_greedy(out.used_graph, local, first_train, first_val, rc)
              : reduce::reduce_random(out.used_graph, local, first_train, first_val, cfg.rd_count,
                                      cfg.rd_ratios, rc, cfg.seed * 31 + 7);
      out.cv.selected = 0;
      out.cv.mean_val_mse = {rr.chosen_val_loss};
      out.selected = cfg.grid[0];
      out.final_val_mse = rr.chosen_val_loss;
      out.best_epoch = rr.final_training.best_epoch;
      out.used_graph = rr.chosen;
      model = mnode::build_model(rr.chosen, shape_of(local), mc);
      model.params = rr.final_training.params;
      break;
    }
  }

  out.model = std::move(model);
  return out;
}

Mat predict(const MethodRun& run, const data::Instance& inst) {
  if (!run.norm.active) return mnode::predict(run.model, run.model.params, inst);
  data::Dataset tmp;
  tmp.instances.push_back(inst);
  auto scaled = run.norm.apply(tmp);
  Mat preds = mnode::predict(run.model, run.model.params, scaled.instances[0]);
  return run.norm.denorm_obs(std::move(preds));
}

std::vector<train::GridPoint> expand_grid(Method m, const GridSpec& spec) {
  auto or_default = [](const std::vector<double>& v, double d) {
    return v.empty() ? std::vector<double>{d} : v;
  };
  std::vector<train::GridPoint> grid;
  auto lrs = or_default(spec.lr, 1e-3);
  switch (m) {
    case Method::HGS: {
      for (double l1 : or_default(spec.lambda1, 0.0))
        for (double l2 : or_default(spec.lambda2, 0.0))
          for (double lr : lrs) {
            train::GridPoint g;
            g.loss.regularizer = train::Regularizer::HgsL1L2;
            g.loss.lambda1 = l1;
            g.loss.lambda2 = l2;
            g.lr = lr;
            grid.push_back(g);
          }
      break;
    }
    case Method::NR:
    case Method::GD:
    case Method::RD: {
      for (double l2 : or_default(spec.lambda2, 0.0))
        for (double lr : lrs) {
          train::GridPoint g;
          g.loss.regularizer = train::Regularizer::HgsL1L2;
          g.loss.lambda2 = l2;
          g.lr = lr;
          grid.push_back(g);
        }
      break;
    }
    case Method::EGL: {
      for (double l1 : or_default(spec.lambda1, 0.0))
        for (double lr : lrs) {
          train::GridPoint g;
          g.loss.regularizer = train::Regularizer::Egl;
          g.loss.lambda1 = l1;
          g.lr = lr;
          grid.push_back(g);
        }
      break;
    }
    case Method::EN: {
      auto e1 = spec.en_lambda1.empty() ? spec.lambda1 : spec.en_lambda1;
      auto e2 = spec.en_lambda2.empty() ? spec.lambda2 : spec.en_lambda2;
      for (double l1 : or_default(e1, 0.0))
        for (double l2 : or_default(e2, 0.0))
          for (double lr : lrs) {
            train::GridPoint g;
            g.loss.regularizer = train::Regularizer::ElasticNet;
            g.loss.en_lambda1 = l1;
            g.loss.en_lambda2 = l2;
            g.lr = lr;
            grid.push_back(g);
          }
      break;
    }
    case Method::NS: {
      if (spec.k_edges.empty())
        throw ValidationError("NS grid needs k_edges");
      for (double l2 : or_default(spec.lambda2, 0.0))
        for (double lr : lrs)
          for (int k : spec.k_edges) {
            train::GridPoint g;
            g.loss.regularizer = train::Regularizer::HgsL1L2;
            g.loss.lambda2 = l2;
            g.lr = lr;
            g.k_edges = k;
            grid.push_back(g);
          }
      break;
    }
  }
  return grid;
}

std::string save_trained(const MethodRun& run) {
  nlohmann::json j;
  j["format"] = "hgs-trained";
  j["version"] = 1;
  j["method"] = method_name(run.method);
  j["model"] = nlohmann::json::parse(mnode::save_model(run.model));
  j["normalizer"] = {{"active", run.norm.active},
                     {"obs_mean", run.norm.obs_mean},
                     {"obs_sd", run.norm.obs_sd},
                     {"in_mean", run.norm.in_mean},
                     {"in_sd", run.norm.in_sd}};
  j["selected"] = {{"regularizer", train::regularizer_name(run.selected.loss.regularizer)},
                   {"lambda1", run.selected.loss.lambda1},
                   {"lambda2", run.selected.loss.lambda2},
                   {"en_lambda1", run.selected.loss.en_lambda1},
                   {"en_lambda2", run.selected.loss.en_lambda2},
                   {"lr", run.selected.lr},
                   {"k_edges", run.selected.k_edges}};
  j["final_val_mse"] = run.final_val_mse;
  j["best_epoch"] = run.best_epoch;
  return j.dump();
}

MethodRun load_trained(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "hgs-trained" || j.value("version", 0) != 1)
    throw ValidationError("not a version-1 hgs-trained file");
  MethodRun run;
  run.method = method_from_name(j.at("method").get<std::string>());
  run.model = mnode::load_model(j.at("model").dump());
  const auto& n = j.at("normalizer");
  run.norm.active = n.at("active").get<bool>();
  run.norm.obs_mean = n.at("obs_mean").get<std::vector<double>>();
  run.norm.obs_sd = n.at("obs_sd").get<std::vector<double>>();
  run.norm.in_mean = n.at("in_mean").get<std::vector<double>>();
  run.norm.in_sd = n.at("in_sd").get<std::vector<double>>();
  const auto& s = j.at("selected");
  run.selected.loss.regularizer =
      train::regularizer_from_name(s.at("regularizer").get<std::string>());
  run.selected.loss.lambda1 = s.at("lambda1").get<double>();
  run.selected.loss.lambda2 = s.at("lambda2").get<double>();
  run.selected.loss.en_lambda1 = s.at("en_lambda1").get<double>();
  run.selected.loss.en_lambda2 = s.at("en_lambda2").get<double>();
  run.selected.lr = s.at("lr").get<double>();
  run.selected.k_edges = s.at("k_edges").get<int>();
  run.final_val_mse = j.value("final_val_mse", 0.0);
  run.best_epoch = j.value("best_epoch", 0);
  run.used_graph = run.model.graph;
  return run;
}

RepetitionRow evaluate_run(const MethodRun& run, const data::Dataset& test, int rep) {
  RepetitionRow row;
  row.method = method_name(run.method);
  row.rep = rep;
  std::vector<Mat> preds, targets;
  preds.reserve(test.size());
  for (const auto& inst : test.instances) {
    preds.push_back(predict(run, inst));
    targets.push_back(inst.future_obs);
  }
  auto m = eval::metrics(preds, targets);
  row.rmse = m.rmse;
  row.peak_rmse = m.peak_rmse;
  row.mape = m.mape;
  row.peak_mape = m.peak_mape;
  row.corr = m.pearson_corr;
  row.diag_accuracy = m.diag_accuracy;
  row.test_rmse = eval::test_rmse(preds, targets);
  row.enp = train::enp(run.model.params, 1e-3);
  row.val_rmse = std::sqrt(run.final_val_mse);
  row.best_epoch = run.best_epoch;
  row.sel_lambda1 = run.selected.loss.regularizer == train::Regularizer::ElasticNet
                        ? run.selected.loss.en_lambda1
                        : run.selected.loss.lambda1;
  row.sel_lambda2 = run.selected.loss.regularizer == train::Regularizer::ElasticNet
                        ? run.selected.loss.en_lambda2
                        : run.selected.loss.lambda2;
  row.sel_lr = run.selected.lr;
  row.sel_k = run.selected.k_edges;
  if (run.model.cfg.weighted && !run.model.canonical_edges.empty()) {
    const double* w = run.model.params.slice("edges", "w");
    int below = 0;
    for (size_t i = 0; i < run.model.canonical_edges.size(); ++i)
      below += std::fabs(w[i]) < 1e-3;
    row.weights_below_1e3 = static_cast<double>(below) / run.model.canonical_edges.size();
  }
  return row;
}

// ---- reports --------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string report_csv(const std::vector<RepetitionRow>& rows) {
  std::string out =
      "method,rep,test_rmse,rmse,peak_rmse,mape,peak_mape,corr,diag_accuracy,enp,val_rmse,"
      "weights_below_1e3,best_epoch,sel_lambda1,sel_lambda2,sel_lr,sel_k\n";
  for (const auto& r : rows) {
    out += r.method + "," + std::to_string(r.rep) + "," + fmt(r.test_rmse) + "," + fmt(r.rmse) +
           "," + fmt(r.peak_rmse) + "," + fmt(r.mape) + "," + fmt(r.peak_mape) + "," +
           fmt(r.corr) + "," + fmt(r.diag_accuracy) + "," + std::to_string(r.enp) + "," +
           fmt(r.val_rmse) + "," + fmt(r.weights_below_1e3) + "," + std::to_string(r.best_epoch) +
           "," + fmt(r.sel_lambda1) + "," + fmt(r.sel_lambda2) + "," + fmt(r.sel_lr) + "," +
           std::to_string(r.sel_k) + "\n";
  }
  return out;
}

std::string report_summary_json(const std::vector<RepetitionRow>& rows) {
  std::map<std::string, std::vector<const RepetitionRow*>> by_method;
  for (const auto& r : rows) by_method[r.method].push_back(&r);

  nlohmann::json j = nlohmann::json::array();
  for (const auto& [method, rs] : by_method) {
    auto collect = [&](auto get) {
      std::vector<double> v;
      for (const auto* r : rs) v.push_back(get(*r));
      return v;
    };
    auto rmse = eval::monte_carlo_se(collect([](const RepetitionRow& r) { return r.test_rmse; }));
    auto enp_ms = eval::monte_carlo_se(
        collect([](const RepetitionRow& r) { return static_cast<double>(r.enp); }));
    auto peak = collect([](const RepetitionRow& r) { return r.peak_rmse; });
    auto mape = eval::monte_carlo_se(collect([](const RepetitionRow& r) { return r.mape; }));
    auto corr = eval::monte_carlo_se(collect([](const RepetitionRow& r) { return r.corr; }));
    auto acc =
        eval::monte_carlo_se(collect([](const RepetitionRow& r) { return r.diag_accuracy; }));
    nlohmann::json e;
    e["model"] = method;
    e["repetitions"] = rs.size();
    e["RMSE"] = {{"mean", rmse.mean}, {"se", rmse.se}};
    e["PeakRMSE"] = *std::max_element(peak.begin(), peak.end());
    e["ENP"] = {{"mean", enp_ms.mean}, {"se", enp_ms.se}};
    e["MAPE"] = {{"mean", mape.mean}, {"se", mape.se}};
    e["Corr"] = {{"mean", corr.mean}, {"se", corr.se}};
    e["DiagAccuracy"] = {{"mean", acc.mean}, {"se", acc.se}};
    j.push_back(std::move(e));
  }
  return j.dump(2);
}

// ---- experiment presets ------------------------------------------------------------------

std::vector<RepetitionRow> run_synthetic_experiment(const SyntheticExperimentSpec& spec,
                                                    bool verbose) {
  data::SynthOptions test_opt{spec.kind, spec.regime, spec.test_size, spec.test_seed};
  data::Dataset test = data::gen_synthetic(test_opt);
  auto mech = graph::build_synthetic_graph(spec.kind, spec.regime);

  struct Job {
    Method method;
    int rep;
  };
  std::vector<Job> jobs;
  for (int rep = 0; rep < spec.repetitions; ++rep)
    for (Method m : spec.methods) jobs.push_back({m, rep});
  std::vector<RepetitionRow> rows(jobs.size());

  parallel_for(static_cast<int>(jobs.size()), [&](int ji) {
    const Job& job = jobs[ji];
    data::SynthOptions train_opt{spec.kind, spec.regime, spec.train_size,
                                 spec.train_seed_base + static_cast<uint64_t>(job.rep)};
    data::Dataset train_data = data::gen_synthetic(train_opt);

    MethodConfig cfg;
    cfg.method = job.method;
    auto it = spec.grids.find(method_name(job.method));
    if (it == spec.grids.end())
      throw ValidationError("no grid for method " + method_name(job.method));
    cfg.grid = it->second;
    cfg.folds = spec.folds;
    cfg.epochs = spec.epochs;
    cfg.batch_size = spec.batch_size;
    cfg.seed = spec.init_seed_base + static_cast<uint64_t>(job.rep);
    auto run = run_method(mech, train_data, cfg);
    rows[ji] = evaluate_run(run, test, job.rep);
    if (verbose)
      std::fprintf(stderr, "[%s rep %d] test_rmse=%.6f enp=%d\n", rows[ji].method.c_str(),
                   job.rep, rows[ji].test_rmse, rows[ji].enp);
  });
  return rows;
}

UvaExperimentResult run_uva_experiment(const UvaExperimentSpec& spec, bool verbose) {
  UvaExperimentResult res;
  data::UvaSimOptions opt;
  opt.size = spec.cohort_size;
  opt.seed = spec.cohort_seed;
  data::Dataset cohort = data::simulate_uva_cohort(opt);

  auto mech = graph::build_uva_graph();
  auto condensed = graph::condense(mech);
  res.rdag_ok = graph::is_rdag(graph::augment(condensed));
  for (const auto& n : condensed.nodes)
    if (n.members.count("Gp") && n.members.count("Gt")) res.gp_gt_collapsed = true;

  for (Method m : {Method::HGS, Method::NR}) {
    MethodConfig cfg;
    cfg.method = m;
    cfg.folds = spec.folds;
    cfg.epochs = spec.epochs;
    cfg.batch_size = spec.batch_size;
    cfg.seed = spec.init_seed;
    cfg.normalize = true;
    train::GridPoint gp;
    gp.lr = spec.lr;
    gp.loss.regularizer = train::Regularizer::HgsL1L2;
    gp.loss.lambda1 = m == Method::HGS ? spec.hgs_lambda1 : 0.0;
    gp.loss.lambda2 = spec.lambda2;
    cfg.grid = {gp};
    auto run = run_method(mech, cohort, cfg);
    // evaluate on the held-out validation fold in original units
    auto folds = train::kfold_splits(static_cast<int>(cohort.size()), spec.folds, {});
    data::Dataset val;
    val.meta = cohort.meta;
    for (int i : folds[0]) val.instances.push_back(cohort.instances[i]);
    auto row = evaluate_run(run, val, 0);
    if (verbose)
      std::fprintf(stderr, "[UVA %s] val_rmse=%.4f test_rmse=%.4f frac_w<1e-3=%.3f\n",
                   row.method.c_str(), row.val_rmse, row.test_rmse, row.weights_below_1e3);
    res.rows.push_back(row);
  }
  return res;
}

}  // namespace hgs::pipeline
