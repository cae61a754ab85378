#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include <cstdio>
#include <cstdlib>
#include <algorithm>
#include "doctest.h"
#include "hgs/data.hpp"
#include "hgs/mnode.hpp"
#include "hgs/train.hpp"

using namespace hgs;
using namespace hgs::graph;
using namespace hgs::mnode;

namespace {

SuperGraph refined_hgs_graph() {
  return augment(condense(build_synthetic_graph(SynthGraphKind::Refined)));
}

data::Instance synth_instance(int q, int m, uint64_t seed) {
  data::Instance inst;
  inst.past_obs = Mat(1, 1, 0.0);
  inst.past_inputs = Mat(0, m);
  inst.future_inputs = Mat(q, m);
  inst.future_obs = Mat(q, 1);
  Rng rng(seed);
  for (auto& v : inst.future_inputs.v) v = rng.normal();
  for (auto& v : inst.future_obs.v) v = rng.normal();
  return inst;
}

// single state node s with self-loop driven by one input
SuperGraph tiny_graph() {
  SuperGraph g;
  g.nodes.push_back({"s", NodeKind::Observable, {"s"}, 1});
  g.nodes.push_back({"x", NodeKind::Input, {"x"}, 1});
  g.edges = {{"s", "s"}, {"x", "s"}};
  for (const auto& e : g.edges) g.provenance[e] = Provenance::Original;
  return g;
}

}  // namespace

TEST_CASE("initial condition: overwrite rule and encoder bypass") {
  auto g = tiny_graph();
  DataShape shape{0, 1, 1, {"x"}};
  ModelConfig mc;
  auto m = build_model(g, shape, mc);
  init_params(m, 1);

  data::Instance inst = synth_instance(3, 1, 2);
  inst.past_obs.at(0, 0) = 5.0;
  auto init = initial_condition(m, m.params, inst);
  REQUIRE(init.size() == 1);
  CHECK(init[0] == 5.0);

  // zero-step rollout keeps the state
  Mat none(0, 1);
  std::vector<double> fin;
  rollout(m, m.params, init, none, nullptr, &fin);
  CHECK(fin == init);
}

TEST_CASE("initial condition with encoder: zero params give zero latents") {
  // two-node graph so a latent entry exists
  SuperGraph g;
  g.nodes.push_back({"s", NodeKind::Observable, {"s"}, 1});
  g.nodes.push_back({"l", NodeKind::Latent, {"l"}, 1});
  g.nodes.push_back({"x", NodeKind::Input, {"x"}, 1});
  g.edges = {{"x", "l"}, {"l", "s"}, {"s", "s"}};
  for (const auto& e : g.edges) g.provenance[e] = Provenance::Original;

  DataShape shape{4, 1, 1, {"x"}};
  ModelConfig mc;
  auto m = build_model(g, shape, mc);
  CHECK(m.use_encoder);
  // zero encoder params -> zero latent estimate; observed s1(0)=5 overwrites
  data::Instance inst;
  inst.past_obs = Mat(5, 1, 1.0);
  inst.past_obs.at(4, 0) = 5.0;
  inst.past_inputs = Mat(4, 1, 0.3);
  inst.future_inputs = Mat(2, 1, 0.0);
  inst.future_obs = Mat(2, 1, 0.0);
  auto init = initial_condition(m, m.params, inst);  // params still zero
  REQUIRE(init.size() == 2);
  CHECK(init[0] == 0.0);  // latent l (id-sorted before s)
  CHECK(init[1] == 5.0);  // observable s overwritten with s(t_0)
}

TEST_CASE("state vector ordering is id-sorted") {
  SuperGraph g;
  g.nodes.push_back({"s", NodeKind::Observable, {"s"}, 1});
  g.nodes.push_back({"l", NodeKind::Latent, {"l"}, 1});
  g.nodes.push_back({"x", NodeKind::Input, {"x"}, 1});
  g.edges = {{"x", "l"}, {"l", "s"}, {"s", "s"}};
  for (const auto& e : g.edges) g.provenance[e] = Provenance::Original;
  auto m = build_model(g, DataShape{0, 1, 1, {"x"}}, ModelConfig{});
  REQUIRE(m.states.size() == 2);
  CHECK(m.states[0].id == "l");
  CHECK(m.states[1].id == "s");
  CHECK(m.states[1].obs_offset == 0);

  data::Instance inst;
  inst.past_obs = Mat(1, 1, 7.0);
  inst.past_inputs = Mat(0, 1);
  inst.future_inputs = Mat(1, 1, 0.0);
  inst.future_obs = Mat(1, 1, 0.0);
  auto init = initial_condition(m, m.params, inst);
  CHECK(init[0] == 0.0);  // latent l
  CHECK(init[1] == 7.0);  // observable s got the overwrite
}

TEST_CASE("rollout with zero MLPs holds the initial state") {
  auto g = tiny_graph();
  auto m = build_model(g, DataShape{0, 1, 1, {"x"}}, ModelConfig{});
  // params are zero
  data::Instance inst = synth_instance(5, 1, 3);
  inst.past_obs.at(0, 0) = 2.5;
  auto preds = predict(m, m.params, inst);
  for (int h = 0; h < 5; ++h) CHECK(preds.at(h, 0) == 2.5);
}

TEST_CASE("hand-wired linear model reproduces the generator recurrence") {
  // NN(s, x) = 4x - 0.5(s - 1), delta_t = 0.05: exactly the data recurrence
  auto g = tiny_graph();
  ModelConfig mc;
  mc.delta_t = 0.05;
  mc.hidden_layers = 0;
  auto m = build_model(g, DataShape{0, 1, 2, {"x", "noise"}}, mc);
  init_params(m, 4);
  // input layout: state parent s then input parent x; linear weights [ -0.5, 4 ], bias 0.5
  double* w = m.params.slice("node:s", "l0.w");
  w[0] = -0.5;
  w[1] = 4.0;
  m.params.slice("node:s", "l0.b")[0] = 0.5;

  data::SynthOptions opt;
  opt.size = 3;
  opt.seed = 99;
  auto ds = data::gen_synthetic(opt);
  // true-sparsity regime: v_{k+1} = v_k + 0.05 (4 x1_k - 0.5 (v_k - 1))
  for (const auto& inst : ds.instances) {
    data::Instance probe = inst;
    // model binds channels by name; x1 is channel 0, which our graph calls "x"
    auto preds = [&] {
      data::Instance local = probe;
      return rollout(m, m.params, initial_condition(m, m.params, local),
                     local.future_inputs);
    }();
    for (int h = 0; h < 60; ++h)
      CHECK(preds.at(h, 0) == doctest::Approx(inst.future_obs.at(h, 0)).epsilon(1e-12));
  }
}

TEST_CASE("zero edge weight gates an input out completely") {
  auto g = refined_hgs_graph();
  // inputs sc_x1..sc_x4 bound to channels x1..x4; 5th dataset channel unused
  DataShape shape{0, 1, 5, {"x1", "x2", "x3", "x4", "noise"}};
  ModelConfig mc;
  auto m = build_model(g, shape, mc);
  init_params(m, 11);
  int wi = m.weight_index({"sc_x1", "sc_s1"});
  REQUIRE(wi >= 0);
  m.params.slice("edges", "w")[wi] = 0.0;

  auto inst = synth_instance(10, 5, 21);
  auto base = predict(m, m.params, inst);
  data::Instance bumped = inst;
  for (int h = 0; h < 10; ++h) bumped.future_inputs.at(h, 0) += 100.0;  // x1 series
  auto moved = predict(m, m.params, bumped);
  for (size_t i = 0; i < base.v.size(); ++i) CHECK(base.v[i] == moved.v[i]);

  // sanity: with weight restored the predictions must react
  m.params.slice("edges", "w")[wi] = 1.0;
  auto reacting = predict(m, m.params, bumped);
  CHECK(sq_dist(reacting, base) > 0);
}

TEST_CASE("weight sharing on the named examples") {
  SuperGraph chain;
  chain.nodes.push_back({"u", NodeKind::Observable, {"u"}, 1});
  chain.nodes.push_back({"v", NodeKind::Latent, {"v"}, 1});
  chain.nodes.push_back({"w", NodeKind::Observable, {"w"}, 1});
  chain.edges = {{"u", "v"}, {"v", "w"}};
  auto share = apply_weight_sharing(chain);
  REQUIRE(share.size() == 1);
  CHECK(share.at({"v", "w"}) == Edge{"u", "v"});

  SuperGraph with_loop = chain;
  with_loop.edges.insert({"v", "v"});
  CHECK(apply_weight_sharing(with_loop).empty());

  SuperGraph obs_chain = chain;
  obs_chain.nodes[1].kind = NodeKind::Observable;  // middle node no longer latent
  CHECK(apply_weight_sharing(obs_chain).empty());
}

TEST_CASE("shared edges read and train a single weight") {
  SuperGraph chain;
  chain.nodes.push_back({"u", NodeKind::Observable, {"u"}, 1});
  chain.nodes.push_back({"v", NodeKind::Latent, {"v"}, 1});
  chain.nodes.push_back({"w", NodeKind::Observable, {"w"}, 1});
  chain.edges = {{"u", "v"}, {"v", "w"}};
  for (const auto& e : chain.edges) chain.provenance[e] = Provenance::Original;

  auto m = build_model(chain, DataShape{0, 2, 0, {}}, ModelConfig{});
  CHECK(m.canonical_edges.size() == 1);
  CHECK(m.weight_index({"v", "w"}) == m.weight_index({"u", "v"}));
  CHECK(m.edge_weight(m.params, {"v", "w"}) == m.edge_weight(m.params, {"u", "v"}));
}

TEST_CASE("full-model gradient matches finite differences (rollout + encoder)") {
  SuperGraph g;
  g.nodes.push_back({"s", NodeKind::Observable, {"s"}, 1});
  g.nodes.push_back({"l", NodeKind::Latent, {"l"}, 1});
  g.nodes.push_back({"x", NodeKind::Input, {"x"}, 1});
  g.edges = {{"x", "l"}, {"l", "s"}, {"s", "s"}, {"l", "l"}, {"s", "l"}};
  for (const auto& e : g.edges) g.provenance[e] = Provenance::Original;

  ModelConfig mc;
  mc.hidden_units = 6;
  auto m = build_model(g, DataShape{4, 1, 1, {"x"}}, mc);
  init_params(m, 31);

  data::Dataset ds;
  ds.meta.input_channels = {"x"};
  Rng rng(55);
  for (int i = 0; i < 3; ++i) {
    data::Instance inst;
    inst.past_obs = Mat(5, 1);
    inst.past_inputs = Mat(4, 1);
    inst.future_inputs = Mat(6, 1);
    inst.future_obs = Mat(6, 1);
    for (auto* mat : {&inst.past_obs, &inst.past_inputs, &inst.future_inputs, &inst.future_obs})
      for (auto& v : mat->v) v = rng.normal(0, 0.4);
    // residuals at a realistic (near-fit) scale keep the finite differences
    // above double-precision cancellation noise
    Mat preds = predict(m, m.params, inst);
    for (size_t j = 0; j < preds.v.size(); ++j)
      inst.future_obs.v[j] = preds.v[j] + rng.normal(0, 0.02);
    ds.instances.push_back(std::move(inst));
  }

  train::LossConfig lc;
  lc.lambda1 = 1e-3;
  lc.lambda2 = 1e-4;
  train::MnodeLoss loss(m, ds, {0, 1, 2}, lc);
  CHECK(nn::finite_diff_check(loss, m.params, 100, 1e-5, 4242) < 1e-6);
}

TEST_CASE("golden prediction regression") {
  auto g = refined_hgs_graph();
  ModelConfig mc;
  mc.hidden_units = 4;
  auto m = build_model(g, DataShape{0, 1, 5, {"x1", "x2", "x3", "x4", "noise"}}, mc);
  init_params(m, 2024);
  auto inst = synth_instance(4, 5, 7);
  inst.past_obs.at(0, 0) = 0.5;
  auto preds = predict(m, m.params, inst);
  REQUIRE(preds.rows == 4);
  if (const char* dump = std::getenv("HGS_DUMP_GOLDEN")) {
    (void)dump;
    for (int h = 0; h < 4; ++h) std::printf("golden %.17g\n", preds.at(h, 0));
  }
  // frozen from a by-hand-checked run of this configuration (see HGS_DUMP_GOLDEN)
  const double expected[4] = {0.35789133392536859, 0.12585046777983511, 0.19127523798602164,
                              0.21806595803423379};
  for (int h = 0; h < 4; ++h) CHECK(preds.at(h, 0) == doctest::Approx(expected[h]).epsilon(1e-14));
}

TEST_CASE("node file order does not change predictions") {
  auto g = refined_hgs_graph();
  SuperGraph shuffled = g;
  std::reverse(shuffled.nodes.begin(), shuffled.nodes.end());
  DataShape shape{0, 1, 5, {"x1", "x2", "x3", "x4", "noise"}};
  ModelConfig mc;
  auto m1 = build_model(g, shape, mc);
  auto m2 = build_model(shuffled, shape, mc);
  init_params(m1, 77);
  init_params(m2, 77);
  auto inst = synth_instance(6, 5, 13);
  auto p1 = predict(m1, m1.params, inst);
  auto p2 = predict(m2, m2.params, inst);
  CHECK(p1.v == p2.v);
}

TEST_CASE("relabeling nodes with transported parameters preserves predictions") {
  auto g = tiny_graph();
  ModelConfig mc;
  auto m1 = build_model(g, DataShape{0, 1, 1, {"x"}}, mc);
  init_params(m1, 5);

  // relabel s -> zz (sorts after x now) and transport parameter blocks
  SuperGraph g2;
  g2.nodes.push_back({"zz", NodeKind::Observable, {"zz"}, 1});
  g2.nodes.push_back({"x", NodeKind::Input, {"x"}, 1});
  g2.edges = {{"zz", "zz"}, {"x", "zz"}};
  for (const auto& e : g2.edges) g2.provenance[e] = Provenance::Original;
  auto m2 = build_model(g2, DataShape{0, 1, 1, {"x"}}, mc);
  // same parent structure (state parent then input parent), so blocks map 1:1
  std::copy(m1.params.slice("node:s", "l0.w"),
            m1.params.slice("node:s", "l0.w") + nn::mlp_param_count(m1.states[0].mlp),
            m2.params.slice("node:zz", "l0.w"));
  const double* w1 = m1.params.slice("edges", "w");
  double* w2 = m2.params.slice("edges", "w");
  // canonical edge order differs after relabeling; map by edge identity
  w2[m2.weight_index({"zz", "zz"})] = w1[m1.weight_index({"s", "s"})];
  w2[m2.weight_index({"x", "zz"})] = w1[m1.weight_index({"x", "s"})];

  auto inst = synth_instance(5, 1, 31);
  inst.past_obs.at(0, 0) = 1.0;
  auto p1 = predict(m1, m1.params, inst);
  auto p2 = predict(m2, m2.params, inst);
  for (size_t i = 0; i < p1.v.size(); ++i) CHECK(p1.v[i] == doctest::Approx(p2.v[i]).epsilon(1e-15));
}

TEST_CASE("state guard raises NonFinite on blow-up") {
  auto g = tiny_graph();
  ModelConfig mc;
  mc.hidden_layers = 0;
  auto m = build_model(g, DataShape{0, 1, 1, {"x"}}, mc);
  init_params(m, 8);
  m.params.slice("node:s", "l0.w")[0] = 3.0;  // s' = 3 s: doubles every step and beyond
  m.params.slice("node:s", "l0.w")[1] = 0.0;
  m.params.slice("node:s", "l0.b")[0] = 0.0;

  data::Instance inst = synth_instance(60, 1, 41);
  inst.past_obs.at(0, 0) = 1.0;
  CHECK_THROWS_AS(predict(m, m.params, inst), NonFiniteError);
}

TEST_CASE("model checkpoint round-trips") {
  auto g = refined_hgs_graph();
  ModelConfig mc;
  mc.hidden_units = 4;
  auto m = build_model(g, DataShape{0, 1, 5, {"x1", "x2", "x3", "x4", "noise"}}, mc);
  init_params(m, 3);
  auto text = save_model(m);
  auto m2 = load_model(text);
  CHECK(m2.params.values == m.params.values);
  auto inst = synth_instance(5, 5, 9);
  CHECK(predict(m, m.params, inst).v == predict(m2, m2.params, inst).v);
}

TEST_CASE("time input feeds a scaled clock to every node MLP") {
  auto g = tiny_graph();
  ModelConfig mc;
  mc.time_input = true;
  mc.hidden_layers = 0;
  auto m = build_model(g, DataShape{0, 1, 1, {"x"}}, mc);
  REQUIRE(m.states[0].mlp.in_dim == 3);  // self + input + t
  // wire the output to read only the clock: y = t
  double* w = m.params.slice("node:s", "l0.w");
  w[0] = 0.0;
  w[1] = 0.0;
  w[2] = 1.0;
  data::Instance inst = synth_instance(5, 1, 3);
  inst.past_obs.at(0, 0) = 0.0;
  auto preds = predict(m, m.params, inst);
  // state accumulates t_h = h/(q-1): 0, .25, .5, .75, 1
  CHECK(preds.at(0, 0) == doctest::Approx(0.0));
  CHECK(preds.at(4, 0) == doctest::Approx(0.0 + 0.25 + 0.5 + 0.75 + 1.0));

  // gradient path through the clock column stays correct
  data::Dataset ds;
  ds.meta.input_channels = {"x"};
  ds.instances.push_back(inst);
  init_params(m, 12);
  train::LossConfig lc;
  train::MnodeLoss loss(m, ds, {0}, lc);
  CHECK(nn::finite_diff_check(loss, m.params, 0, 1e-5) < 1e-6);
}
