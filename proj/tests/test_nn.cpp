#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "hgs/nn.hpp"

using namespace hgs;
using namespace hgs::nn;

namespace {

// independent straight-loop oracle for the MLP forward pass
std::vector<double> mlp_oracle(const MlpSpec& s, const std::vector<double>& params,
                               const std::vector<double>& in) {
  std::vector<double> cur = in;
  size_t pos = 0;
  int cur_dim = s.in_dim;
  for (int l = 0; l < s.hidden_layers; ++l) {
    std::vector<double> next(s.hidden_units, 0.0);
    for (int o = 0; o < s.hidden_units; ++o) {
      double acc = 0;
      for (int i = 0; i < cur_dim; ++i) acc += params[pos + o * cur_dim + i] * cur[i];
      next[o] = acc;
    }
    pos += static_cast<size_t>(s.hidden_units) * cur_dim;
    for (int o = 0; o < s.hidden_units; ++o) next[o] += params[pos + o];
    pos += s.hidden_units;
    for (auto& v : next) v = std::max(v, 0.0);
    cur = next;
    cur_dim = s.hidden_units;
  }
  std::vector<double> out(s.out_dim, 0.0);
  for (int o = 0; o < s.out_dim; ++o) {
    double acc = 0;
    for (int i = 0; i < cur_dim; ++i) acc += params[pos + o * cur_dim + i] * cur[i];
    out[o] = acc;
  }
  pos += static_cast<size_t>(s.out_dim) * cur_dim;
  for (int o = 0; o < s.out_dim; ++o) out[o] += params[pos + o];
  return out;
}

struct QuadraticLoss : LossFunction {  // 0.5 ||p||^2
  double value(const ParamVector& p) const override {
    double s = 0;
    for (double x : p.values) s += 0.5 * x * x;
    return s;
  }
  double value_and_grad(const ParamVector& p, ParamVector& g) const override {
    g.values = p.values;
    return value(p);
  }
};

struct ConstantLoss : LossFunction {
  double value(const ParamVector&) const override { return 3.5; }
  double value_and_grad(const ParamVector&, ParamVector& g) const override {
    std::fill(g.values.begin(), g.values.end(), 0.0);
    return 3.5;
  }
};

// MLP squared-output loss with the library backward, for finite differences
struct MlpLoss : LossFunction {
  MlpSpec spec;
  std::vector<double> input;
  double value(const ParamVector& p) const override {
    std::vector<double> out(spec.out_dim);
    mlp_forward(spec, p.values.data(), input.data(), out.data());
    double s = 0;
    for (double v : out) s += v * v;
    return s;
  }
  double value_and_grad(const ParamVector& p, ParamVector& g) const override {
    std::fill(g.values.begin(), g.values.end(), 0.0);
    MlpCache cache;
    std::vector<double> out(spec.out_dim);
    mlp_forward(spec, p.values.data(), input.data(), out.data(), &cache);
    std::vector<double> dout(spec.out_dim);
    double s = 0;
    for (int i = 0; i < spec.out_dim; ++i) {
      s += out[i] * out[i];
      dout[i] = 2 * out[i];
    }
    mlp_backward(spec, p.values.data(), cache, dout.data(), g.values.data(), nullptr);
    return s;
  }
};

// LSTM final-state loss for finite differences
struct LstmLoss : LossFunction {
  EncoderSpec spec;
  Mat seq;
  double value(const ParamVector& p) const override {
    std::vector<double> h(spec.hidden_dim);
    lstm_forward(spec, p.values.data(), seq, h.data());
    double s = 0;
    for (double v : h) s += v * v;
    return s;
  }
  double value_and_grad(const ParamVector& p, ParamVector& g) const override {
    std::fill(g.values.begin(), g.values.end(), 0.0);
    LstmCache cache;
    std::vector<double> h(spec.hidden_dim);
    lstm_forward(spec, p.values.data(), seq, h.data(), &cache);
    std::vector<double> dh(spec.hidden_dim);
    double s = 0;
    for (int i = 0; i < spec.hidden_dim; ++i) {
      s += h[i] * h[i];
      dh[i] = 2 * h[i];
    }
    lstm_backward(spec, p.values.data(), cache, dh.data(), g.values.data());
    return s;
  }
};

ParamVector make_params(size_t n, uint64_t seed) {
  auto layout = std::make_shared<ParamLayout>();
  layout->add("test", "p", n);
  ParamVector p(layout);
  Rng rng(seed);
  for (auto& v : p.values) v = rng.normal(0, 0.5);
  return p;
}

}  // namespace

TEST_CASE("mlp zero parameters give zero output") {
  MlpSpec s{3, 2, 16, 2};
  std::vector<double> p(mlp_param_count(s), 0.0);
  std::vector<double> in{1.0, -2.0, 0.5}, out(2, 7.0);
  mlp_forward(s, p.data(), in.data(), out.data());
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
}

TEST_CASE("mlp single linear layer is affine") {
  MlpSpec s{1, 0, 0, 1};
  std::vector<double> p{2.0, 1.0};  // w=[[2]], b=[1]
  std::vector<double> in{3.0}, out(1);
  mlp_forward(s, p.data(), in.data(), out.data());
  CHECK(out[0] == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("mlp matches the independent oracle") {
  Rng rng(42);
  for (int it = 0; it < 20; ++it) {
    MlpSpec s;
    s.in_dim = 1 + static_cast<int>(rng.below(5));
    s.hidden_layers = static_cast<int>(rng.below(3));
    s.hidden_units = 1 + static_cast<int>(rng.below(8));
    s.out_dim = 1 + static_cast<int>(rng.below(4));
    std::vector<double> p(mlp_param_count(s));
    for (auto& v : p) v = rng.normal();
    std::vector<double> in(s.in_dim);
    for (auto& v : in) v = rng.normal();
    std::vector<double> out(s.out_dim);
    mlp_forward(s, p.data(), in.data(), out.data());
    auto expect = mlp_oracle(s, p, in);
    for (int i = 0; i < s.out_dim; ++i) CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("grad of half squared norm is the parameter vector") {
  auto p = make_params(17, 5);
  auto g = grad(QuadraticLoss{}, p);
  for (size_t i = 0; i < p.size(); ++i) CHECK(g.values[i] == p.values[i]);
}

TEST_CASE("grad of a constant loss is zero") {
  auto p = make_params(9, 6);
  auto g = grad(ConstantLoss{}, p);
  for (double v : g.values) CHECK(v == 0.0);
}

TEST_CASE("finite differences validate the MLP backward pass") {
  MlpLoss loss;
  loss.spec = {4, 2, 8, 3};
  loss.input = {0.3, -1.2, 0.8, 2.0};
  auto layout = std::make_shared<ParamLayout>();
  layout->add("mlp", "p", mlp_param_count(loss.spec));
  ParamVector p(layout);
  Rng rng(7);
  init_mlp_params(loss.spec, p.values.data(), rng);
  CHECK(finite_diff_check(loss, p, 0, 1e-5) < 1e-6);
}

TEST_CASE("finite differences are exact for linear losses") {
  struct Linear : LossFunction {
    double value(const ParamVector& p) const override {
      double s = 0;
      for (size_t i = 0; i < p.size(); ++i) s += (i + 1) * p.values[i];
      return s;
    }
    double value_and_grad(const ParamVector& p, ParamVector& g) const override {
      for (size_t i = 0; i < p.size(); ++i) g.values[i] = i + 1;
      return value(p);
    }
  };
  auto p = make_params(6, 11);
  CHECK(finite_diff_check(Linear{}, p, 0, 1e-5) < 1e-10);
}

TEST_CASE("lstm zero parameters give a zero hidden state") {
  EncoderSpec s{2, 4, 3};
  std::vector<double> p(lstm_param_count(s), 0.0);
  Mat seq(5, 3, 1.0);
  std::vector<double> h(4, 9.0);
  lstm_forward(s, p.data(), seq, h.data());
  for (double v : h) CHECK(v == 0.0);
}

TEST_CASE("lstm is stateful: T=1 differs from T=2") {
  EncoderSpec s{1, 3, 2};
  std::vector<double> p(lstm_param_count(s));
  Rng rng(13);
  init_lstm_params(s, p.data(), rng);
  // zero biases leave the gates active enough for state to move
  Mat one(1, 2, 0.7), two(2, 2, 0.7);
  std::vector<double> h1(3), h2(3);
  lstm_forward(s, p.data(), one, h1.data());
  lstm_forward(s, p.data(), two, h2.data());
  bool differs = false;
  for (int i = 0; i < 3; ++i) differs |= h1[i] != h2[i];
  CHECK(differs);
}

TEST_CASE("lstm single cell matches the hand-unrolled recurrence") {
  EncoderSpec s{1, 1, 1};
  // layout: wx (4), wh (4), b (4); gate order i, f, g, o
  std::vector<double> p{0.5, -0.3, 0.8, 0.1,   // wx
                        0.2, 0.4, -0.6, 0.7,   // wh
                        0.05, -0.1, 0.2, 0.0}; // b
  Mat seq(2, 1);
  seq.at(0, 0) = 1.0;
  seq.at(1, 0) = -0.5;

  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  double h = 0, c = 0;
  for (int t = 0; t < 2; ++t) {
    double x = seq.at(t, 0);
    double gi = sigmoid(0.5 * x + 0.2 * h + 0.05);
    double gf = sigmoid(-0.3 * x + 0.4 * h - 0.1);
    double gg = std::tanh(0.8 * x - 0.6 * h + 0.2);
    double go = sigmoid(0.1 * x + 0.7 * h + 0.0);
    c = gf * c + gi * gg;
    h = go * std::tanh(c);
  }
  std::vector<double> got(1);
  lstm_forward(s, p.data(), seq, got.data());
  CHECK(got[0] == doctest::Approx(h).epsilon(1e-14));
}

TEST_CASE("finite differences validate the LSTM backward pass") {
  LstmLoss loss;
  loss.spec = {2, 3, 2};
  loss.seq = Mat(4, 2);
  Rng rng(23);
  for (auto& v : loss.seq.v) v = rng.normal();
  auto layout = std::make_shared<ParamLayout>();
  layout->add("enc", "p", lstm_param_count(loss.spec));
  ParamVector p(layout);
  init_lstm_params(loss.spec, p.values.data(), rng);
  // nudge the biases off zero so no gate sits exactly at saturation symmetry
  for (size_t i = 0; i < p.size(); ++i)
    if (p.values[i] == 0.0) p.values[i] = 0.01 * ((i % 3) - 1.0);
  CHECK(finite_diff_check(loss, p, 0, 1e-5) < 1e-6);
}

TEST_CASE("parameter layout and checkpoint round-trip") {
  auto layout = std::make_shared<ParamLayout>();
  layout->add("encoder", "l0.wx", 8);
  layout->add("node:s1", "l0.w", 12);
  layout->add("edges", "w", 3);
  CHECK(layout->total == 23);
  CHECK(layout->find("node:s1", "l0.w").offset == 8);

  ParamVector p(layout);
  Rng rng(31);
  for (auto& v : p.values) v = rng.normal();
  auto text = save_checkpoint(p);
  auto q = load_checkpoint(text);
  CHECK(q.values == p.values);  // exact: 17-digit round trip
  CHECK(q.layout->entries.size() == 3);
  CHECK(q.layout->find("edges", "w").offset == 20);
}

TEST_CASE("determinism: same seed, same draws") {
  Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(99), d(100);
  bool differ = false;
  for (int i = 0; i < 10; ++i) differ |= c.next_u64() != d.next_u64();
  CHECK(differ);
}

TEST_CASE("dropout is inert at rate zero and active in training mode") {
  MlpSpec s{2, 1, 8, 1};
  s.dropout_rate = 0.5;
  std::vector<double> p(mlp_param_count(s));
  Rng rng(3);
  init_mlp_params(s, p.data(), rng);
  std::vector<double> in{1.0, 1.0}, out_eval(1), out_train(1);
  mlp_forward(s, p.data(), in.data(), out_eval.data());  // no rng: dropout off
  Rng drop(5);
  mlp_forward(s, p.data(), in.data(), out_train.data(), nullptr, &drop, true);
  CHECK(out_eval[0] != out_train[0]);

  MlpSpec s0 = s;
  s0.dropout_rate = 0.0;
  std::vector<double> out0(1);
  Rng drop2(5);
  mlp_forward(s0, p.data(), in.data(), out0.data(), nullptr, &drop2, true);
  CHECK(out0[0] == out_eval[0]);
}
