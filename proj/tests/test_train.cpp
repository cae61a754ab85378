#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "hgs/data.hpp"
#include "hgs/mnode.hpp"
#include "hgs/train.hpp"

using namespace hgs;
using namespace hgs::graph;
using namespace hgs::mnode;
using namespace hgs::train;

namespace {

SuperGraph one_edge_graph(int obs_dim) {
  SuperGraph g;
  g.nodes.push_back({"s", NodeKind::Observable, {"s"}, obs_dim});
  g.nodes.push_back({"x", NodeKind::Input, {"x"}, 1});
  g.edges = {{"x", "s"}};
  g.provenance[{"x", "s"}] = Provenance::Original;
  return g;
}

data::Dataset const_dataset(int n, int q, int obs_dim, double obs0, double target) {
  data::Dataset d;
  d.meta.input_channels = {"x"};
  for (int i = 0; i < n; ++i) {
    data::Instance inst;
    inst.past_obs = Mat(1, obs_dim, obs0);
    inst.past_inputs = Mat(0, 1);
    inst.future_inputs = Mat(q, 1, 0.0);
    inst.future_obs = Mat(q, obs_dim, target);
    d.instances.push_back(std::move(inst));
  }
  return d;
}

Model refined_hgs_model(int hidden_units = 16) {
  auto g = augment(condense(build_synthetic_graph(SynthGraphKind::Refined)));
  ModelConfig mc;
  mc.hidden_units = hidden_units;
  return build_model(g, DataShape{0, 1, 5, {"x1", "x2", "x3", "x4", "noise"}}, mc);
}

}  // namespace

TEST_CASE("loss is zero for perfect predictions without penalties") {
  auto g = one_edge_graph(1);
  auto m = build_model(g, DataShape{0, 1, 1, {"x"}}, ModelConfig{});
  // zero MLP keeps the state at obs0 = 3; targets 3 -> zero error
  auto d = const_dataset(2, 4, 1, 3.0, 3.0);
  LossConfig lc;
  lc.lambda1 = 0;
  lc.lambda2 = 0;
  MnodeLoss loss(m, d, {0, 1}, lc);
  CHECK(loss.value(m.params) == 0.0);
}

TEST_CASE("loss arithmetic: error (3,4) with one weighted edge") {
  auto g = one_edge_graph(2);
  auto m = build_model(g, DataShape{0, 2, 1, {"x"}}, ModelConfig{});
  // predictions stay at (0,0); targets (-3,-4): error (3,4); w = 2
  m.params.slice("edges", "w")[0] = 2.0;
  data::Dataset d = const_dataset(1, 1, 2, 0.0, 0.0);
  d.instances[0].future_obs.at(0, 0) = -3.0;
  d.instances[0].future_obs.at(0, 1) = -4.0;
  LossConfig lc;
  lc.lambda1 = 0.1;
  lc.lambda2 = 0.0;
  MnodeLoss loss(m, d, {0}, lc);
  CHECK(loss.value(m.params) == doctest::Approx(25.2).epsilon(1e-14));
}

TEST_CASE("EGL penalty on the worked example") {
  SuperGraph g;
  g.nodes.push_back({"v", NodeKind::Observable, {"v"}, 1});
  g.nodes.push_back({"u", NodeKind::Input, {"u"}, 1});
  g.nodes.push_back({"z", NodeKind::Input, {"z"}, 1});
  g.edges = {{"u", "v"}, {"z", "v"}};
  for (const auto& e : g.edges) g.provenance[e] = Provenance::Original;
  auto m = build_model(g, DataShape{0, 1, 2, {"u", "z"}}, ModelConfig{});
  double* w = m.params.slice("edges", "w");
  w[m.weight_index({"u", "v"})] = 0.5;
  w[m.weight_index({"z", "v"})] = -0.3;
  LossConfig lc;
  lc.regularizer = Regularizer::Egl;
  lc.lambda1 = 1.0;
  CHECK(penalty(m, lc, m.params) == doctest::Approx(0.64).epsilon(1e-14));
}

TEST_CASE("exempt edges leave the penalty sum") {
  auto g = one_edge_graph(1);
  auto m = build_model(g, DataShape{0, 1, 1, {"x"}}, ModelConfig{});
  m.params.slice("edges", "w")[0] = 2.0;
  LossConfig lc;
  lc.lambda1 = 0.5;
  CHECK(penalty(m, lc, m.params) == doctest::Approx(1.0));
  lc.exempt_edges = {{"x", "s"}};
  CHECK(penalty(m, lc, m.params) == 0.0);
}

TEST_CASE("optimal_edge_weight closed form and minimality") {
  CHECK(optimal_edge_weight(0.0, 1.0, 1.0) == 0.0);
  CHECK(optimal_edge_weight(2.0, 1.0, 1.0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK_THROWS_AS(optimal_edge_weight(1.0, 0.0, 1.0), ValidationError);

  // grid scan confirms the minimizer
  double l1 = 3e-4, l2 = 7e-2, gamma = 1.7;
  double wstar = optimal_edge_weight(gamma, l1, l2);
  auto f = [&](double w) { return l1 * w + l2 * gamma * gamma / (w * w); };
  double fstar = f(wstar);
  for (int i = 0; i <= 400; ++i) {
    double w = wstar / 4 * std::pow(16.0, i / 400.0);  // [w*/4, 4w*] log grid
    CHECK(fstar <= f(w) + 1e-12);
  }
}

TEST_CASE("lambda3 arithmetic") {
  double l3 = group_lasso_lambda3(1e-6, 1e-7);
  double direct = 3.0 * std::pow(2.0, -2.0 / 3.0) * std::pow(1e-6, 2.0 / 3.0) *
                  std::pow(1e-7, 1.0 / 3.0);
  CHECK(l3 == doctest::Approx(direct).epsilon(1e-12));
  CHECK(l3 == doctest::Approx(8.772e-7).epsilon(1e-3));
}

TEST_CASE("group-LASSO equivalence on random models") {
  Rng rng(2718);
  data::SynthOptions so;
  so.size = 3;
  so.seed = 5;
  auto ds = data::gen_synthetic(so);
  data::IndexSlice idx{0, 1, 2};

  auto g = augment(condense(build_synthetic_graph(SynthGraphKind::Refined)));
  ModelConfig mc;
  mc.hidden_units = 8;
  mc.use_sharing = false;  // the reparameterization treats every edge separately
  auto m = build_model(g, DataShape{0, 1, 5, {"x1", "x2", "x3", "x4", "noise"}}, mc);

  const double l1 = 1e-3, l2 = 1e-4;
  const double l3 = group_lasso_lambda3(l1, l2);
  for (int it = 0; it < 10; ++it) {
    init_params(m, 100 + it);
    double* w = m.params.slice("edges", "w");
    for (size_t i = 0; i < m.canonical_edges.size(); ++i) w[i] = rng.uniform(0.2, 2.0);

    // Eq.3 total with the analytic minimizer substituted for each weight
    MnodeLoss data_only(m, ds, idx, LossConfig{Regularizer::None});
    double sse = data_only.value(m.params);
    std::vector<char> in_gamma(m.params.size(), 0);
    double pen = 0;
    for (const auto& e : m.graph.edges) {
      double norm_sq = 0;
      double we = m.edge_weight(m.params, e);
      for (size_t i : m.first_layer_indices(e)) {
        norm_sq += sq(we * m.params.values[i]);
        in_gamma[i] = 1;
      }
      double wstar = optimal_edge_weight(std::sqrt(norm_sq), l1, l2);
      if (wstar > 0) pen += l1 * wstar + l2 * norm_sq / sq(wstar);
    }
    for (size_t i : m.decoder_indices())
      if (!in_gamma[i]) pen += l2 * sq(m.params.values[i]);
    double lhs = sse + pen;

    auto unit = reparameterize_unit_weights(m, m.params);
    double rhs = group_lasso_loss(m, unit, ds, idx, l2, l3);
    CHECK(std::fabs(lhs - rhs) / (std::fabs(rhs) + 1e-30) < 1e-10);
  }
}

TEST_CASE("all-zero first layers reduce the group penalty to the ridge term") {
  auto m = refined_hgs_model(4);
  init_params(m, 9);
  auto unit = reparameterize_unit_weights(m, m.params);
  for (const auto& e : m.graph.edges)
    for (size_t i : m.first_layer_indices(e)) unit.values[i] = 0.0;
  double l2 = 0.3;
  double expect = 0;
  std::vector<char> in_gamma(unit.size(), 0);
  for (const auto& e : m.graph.edges)
    for (size_t i : m.first_layer_indices(e)) in_gamma[i] = 1;
  for (size_t i : m.decoder_indices())
    if (!in_gamma[i]) expect += l2 * sq(unit.values[i]);
  CHECK(group_lasso_penalty(m, unit, l2, 123.0) == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("adam: zero gradient leaves parameters, advances time") {
  std::vector<double> p{1.0, -2.0};
  std::vector<double> g{0.0, 0.0};
  AdamState st;
  adam_step(p, g, st, 0.1);
  CHECK(p == std::vector<double>{1.0, -2.0});
  CHECK(st.t == 1);
}

TEST_CASE("adam first step is a signed learning-rate move") {
  std::vector<double> p{0.0, 0.0};
  std::vector<double> g{0.3, -4.0};
  AdamState st;
  adam_step(p, g, st, 0.01);
  CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("adam matches an independent scalar oracle over steps") {
  double p = 0.7, m = 0, v = 0;  // oracle state
  std::vector<double> lib_p{0.7};
  AdamState st;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.05;
  std::vector<double> grads{1.3, -0.2, 0.8, 0.0, 2.4};
  for (size_t t = 1; t <= grads.size(); ++t) {
    double g = grads[t - 1];
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mhat = m / (1 - std::pow(b1, static_cast<double>(t)));
    double vhat = v / (1 - std::pow(b2, static_cast<double>(t)));
    p -= lr * mhat / (std::sqrt(vhat) + eps);
    std::vector<double> gg{g};
    adam_step(lib_p, gg, st, lr);
    CHECK(lib_p[0] == doctest::Approx(p).epsilon(1e-15));
  }
}

TEST_CASE("train: one epoch takes exactly one step and snapshots it") {
  auto m = refined_hgs_model(4);
  data::SynthOptions so;
  so.size = 8;
  so.seed = 3;
  auto ds = data::gen_synthetic(so);
  TrainConfig tc{1, 1e-2, 123};
  LossConfig lc;
  lc.lambda2 = 1e-6;
  auto r = hgs::train::train(m, ds, {0, 1, 2, 3, 4, 5}, {6, 7}, tc, lc);
  CHECK(r.history.size() == 1);
  CHECK(r.best_epoch == 1);
  CHECK(r.best_val_mse == r.history[0].val_mse);
}

TEST_CASE("train: identical seeds give identical histories") {
  auto m = refined_hgs_model(4);
  data::SynthOptions so;
  so.size = 10;
  so.seed = 4;
  auto ds = data::gen_synthetic(so);
  TrainConfig tc{25, 1e-2, 2024};
  LossConfig lc;
  lc.lambda1 = 1e-6;
  lc.lambda2 = 1e-6;
  auto r1 = hgs::train::train(m, ds, {0, 1, 2, 3, 4, 5, 6}, {7, 8, 9}, tc, lc);
  auto r2 = hgs::train::train(m, ds, {0, 1, 2, 3, 4, 5, 6}, {7, 8, 9}, tc, lc);
  REQUIRE(r1.history.size() == r2.history.size());
  for (size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
    CHECK(r1.history[i].val_mse == r2.history[i].val_mse);
  }
  CHECK(r1.params.values == r2.params.values);
}

TEST_CASE("train: snapshot dominates every epoch's validation loss") {
  auto m = refined_hgs_model(4);
  data::SynthOptions so;
  so.size = 12;
  so.seed = 6;
  auto ds = data::gen_synthetic(so);
  TrainConfig tc{40, 1e-2, 7};
  LossConfig lc;
  lc.lambda2 = 1e-6;
  auto r = hgs::train::train(m, ds, {0, 1, 2, 3, 4, 5, 6, 7}, {8, 9, 10, 11}, tc, lc);
  for (const auto& e : r.history) CHECK(r.best_val_mse <= e.val_mse);
}

TEST_CASE("train: blow-up aborts with diagnostics") {
  auto g = one_edge_graph(1);
  ModelConfig mc;
  mc.hidden_layers = 0;
  mc.state_guard = 10.0;
  auto m = build_model(g, DataShape{0, 1, 1, {"x"}}, mc);
  data::Dataset d = const_dataset(4, 30, 1, 1.0, 1.0);
  TrainConfig tc{50, 10.0, 3};  // absurd learning rate
  LossConfig lc;
  try {
    hgs::train::train(m, d, {0, 1, 2}, {3}, tc, lc);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("linear teacher: training reaches a tight fit within 600 epochs") {
  auto m = refined_hgs_model();
  data::SynthOptions so;
  so.size = 20;
  so.seed = 12;
  so.noise_scale = 0.0;  // deterministic recurrence: the exact map is learnable
  auto ds = data::gen_synthetic(so);
  data::IndexSlice train_idx, val_idx;
  for (int i = 0; i < 15; ++i) train_idx.push_back(i);
  for (int i = 15; i < 20; ++i) val_idx.push_back(i);
  TrainConfig tc{600, 1e-2, 2024};
  LossConfig lc;
  lc.lambda1 = 1e-7;
  lc.lambda2 = 1e-6;
  auto r = hgs::train::train(m, ds, train_idx, val_idx, tc, lc);
  // per-entry RMSE on validation well under the target scale (~1)
  double per_entry = std::sqrt(r.best_val_mse / 60.0);
  CHECK(per_entry < 0.05);
}

TEST_CASE("grid of one point is selected and trained") {
  auto m = refined_hgs_model(4);
  data::SynthOptions so;
  so.size = 8;
  so.seed = 31;
  auto ds = data::gen_synthetic(so);
  GridPoint gp;
  gp.lr = 1e-2;
  gp.loss.lambda1 = 1e-6;
  gp.loss.lambda2 = 1e-6;
  CvConfig cv{4, 10, 11, {}};
  auto r = grid_search_cv(m, ds, {gp}, cv);
  CHECK(r.report.selected == 0);
  CHECK(r.report.fold_val_mse[0].size() == 4);
  CHECK_THROWS_AS(grid_search_cv(m, ds, {}, cv), ValidationError);
}

TEST_CASE("rigged grid: the crushing ridge penalty loses") {
  auto m = refined_hgs_model(4);
  data::SynthOptions so;
  so.size = 12;
  so.seed = 13;
  so.noise_scale = 0.0;
  auto ds = data::gen_synthetic(so);
  GridPoint sane, crushed;
  sane.lr = crushed.lr = 1e-2;
  sane.loss.lambda2 = 0.0;
  crushed.loss.lambda2 = 1e3;  // pins every MLP weight to zero: constant predictor
  CvConfig cv{3, 400, 5, {}};
  auto r = grid_search_cv(m, ds, {crushed, sane}, cv);
  CHECK(r.report.selected == 1);
  CHECK(r.report.mean_val_mse[1] < r.report.mean_val_mse[0]);
}

TEST_CASE("kfold splits are contiguous and honor permutations") {
  auto folds = kfold_splits(10, 4);
  CHECK(folds[0] == data::IndexSlice{0, 1, 2});
  CHECK(folds[1] == data::IndexSlice{3, 4, 5});
  CHECK(folds[2] == data::IndexSlice{6, 7});
  CHECK(folds[3] == data::IndexSlice{8, 9});

  std::vector<int> perm{9, 8, 7, 6, 5, 4, 3, 2, 1, 0};
  auto permuted = kfold_splits(10, 5, perm);
  CHECK(permuted[0] == data::IndexSlice{9, 8});
  CHECK_THROWS_AS(kfold_splits(3, 4), ValidationError);
}

TEST_CASE("enp counts magnitudes above the threshold") {
  auto layout = std::make_shared<nn::ParamLayout>();
  layout->add("t", "p", 3);
  nn::ParamVector p(layout);
  p.values = {0.5, 1e-4, -0.01};
  CHECK(enp(p) == 2);
  p.values = {0.0, 0.0, 0.0};
  CHECK(enp(p) == 0);
  CHECK_THROWS_AS(enp(p, 0.0), ValidationError);
}

TEST_CASE("monotone gating: total edge weight does not grow with lambda1") {
  data::SynthOptions so;
  so.size = 24;
  so.seed = 21;
  auto ds = data::gen_synthetic(so);
  data::IndexSlice train_idx, val_idx;
  for (int i = 0; i < 18; ++i) train_idx.push_back(i);
  for (int i = 18; i < 24; ++i) val_idx.push_back(i);

  double prev = -1;
  bool first = true;
  for (double l1 : {1e-7, 1e-6, 1e-5}) {
    auto m = refined_hgs_model();
    TrainConfig tc{400, 1e-2, 2024};
    LossConfig lc;
    lc.lambda1 = l1;
    lc.lambda2 = 1e-6;
    auto r = hgs::train::train(m, ds, train_idx, val_idx, tc, lc);
    auto model = m;
    model.params = r.params;
    const double* w = r.params.slice("edges", "w");
    double total = 0;
    for (size_t i = 0; i < m.canonical_edges.size(); ++i) total += std::fabs(w[i]);
    if (!first) CHECK(total <= prev + 1e-9);
    prev = total;
    first = false;
  }
}

TEST_CASE("penalty gradient matches finite differences including L1 away from zero") {
  auto m = refined_hgs_model(4);
  init_params(m, 77);
  data::SynthOptions so;
  so.size = 3;
  so.seed = 2;
  auto ds = data::gen_synthetic(so);
  // keep residuals small so the differences stay informative
  for (auto& inst : ds.instances) {
    Mat preds = mnode::predict(m, m.params, inst);
    Rng r(9);
    for (size_t j = 0; j < preds.v.size(); ++j) inst.future_obs.v[j] = preds.v[j] + r.normal(0, 0.01);
  }
  LossConfig lc;
  lc.lambda1 = 1e-4;
  lc.lambda2 = 1e-5;
  MnodeLoss loss(m, ds, {0, 1, 2}, lc);
  CHECK(nn::finite_diff_check(loss, m.params, 120, 1e-5, 99) < 1e-6);
}

TEST_CASE("encoder parameters join the ridge penalty only on request") {
  SuperGraph g;
  g.nodes.push_back({"s", NodeKind::Observable, {"s"}, 1});
  g.nodes.push_back({"l", NodeKind::Latent, {"l"}, 1});
  g.nodes.push_back({"x", NodeKind::Input, {"x"}, 1});
  g.edges = {{"x", "l"}, {"l", "s"}, {"s", "s"}};
  for (const auto& e : g.edges) g.provenance[e] = Provenance::Original;
  auto m = build_model(g, DataShape{3, 1, 1, {"x"}}, ModelConfig{});
  init_params(m, 3);
  LossConfig lc;
  lc.lambda2 = 0.5;
  double decoder_only = penalty(m, lc, m.params);
  lc.penalize_encoder = true;
  double with_encoder = penalty(m, lc, m.params);
  double beta_sq = 0;
  for (size_t i : m.encoder_indices()) beta_sq += sq(m.params.values[i]);
  CHECK(with_encoder == doctest::Approx(decoder_only + 0.5 * beta_sq).epsilon(1e-12));
}

TEST_CASE("EGL and elastic-net gradients match finite differences") {
  auto m = refined_hgs_model(4);
  init_params(m, 26);
  data::SynthOptions so;
  so.size = 3;
  so.seed = 14;
  auto ds = data::gen_synthetic(so);
  for (auto& inst : ds.instances) {
    Mat preds = mnode::predict(m, m.params, inst);
    Rng r(4);
    for (size_t j = 0; j < preds.v.size(); ++j)
      inst.future_obs.v[j] = preds.v[j] + r.normal(0, 0.01);
  }
  {
    LossConfig lc;
    lc.regularizer = Regularizer::Egl;
    lc.lambda1 = 1e-4;
    MnodeLoss loss(m, ds, {0, 1, 2}, lc);
    CHECK(nn::finite_diff_check(loss, m.params, 100, 1e-5, 31) < 1e-6);
  }
  {
    LossConfig lc;
    lc.regularizer = Regularizer::ElasticNet;
    lc.en_lambda1 = 1e-4;
    lc.en_lambda2 = 1e-4;
    MnodeLoss loss(m, ds, {0, 1, 2}, lc);
    CHECK(nn::finite_diff_check(loss, m.params, 100, 1e-5, 32) < 1e-6);
  }
}

TEST_CASE("L1 subgradient at exactly zero is zero") {
  auto g = one_edge_graph(1);
  auto m = build_model(g, DataShape{0, 1, 1, {"x"}}, ModelConfig{});
  m.params.slice("edges", "w")[0] = 0.0;
  LossConfig lc;
  lc.lambda1 = 1.0;
  auto grad = m.params.zeros_like();
  penalty_grad(m, lc, m.params, grad);
  CHECK(grad.slice("edges", "w")[0] == 0.0);
}
