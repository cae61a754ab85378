#include "hgs/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "json.hpp"

namespace hgs::nn {

namespace {

inline void affine(const double* w, const double* b, const double* x, int out, int in,
                   double* y) {
  for (int o = 0; o < out; ++o) {
    double acc = b[o];
    const double* row = w + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

// dW += dy x^T, db += dy, dx += W^T dy
inline void affine_backward(const double* w, const double* x, const double* dy, int out, int in,
                            double* dw, double* db, double* dx) {
  for (int o = 0; o < out; ++o) {
    double d = dy[o];
    if (db) db[o] += d;
    const double* row = w + static_cast<size_t>(o) * in;
    double* drow = dw ? dw + static_cast<size_t>(o) * in : nullptr;
    for (int i = 0; i < in; ++i) {
      if (drow) drow[i] += d * x[i];
      if (dx) dx[i] += d * row[i];
    }
  }
}

}  // namespace

size_t mlp_param_count(const MlpSpec& s) {
  if (s.in_dim < 1 || s.out_dim < 1 || s.hidden_layers < 0 ||
      (s.hidden_layers > 0 && s.hidden_units < 1))
    throw ValidationError("mlp spec: dims must be >= 1");
  if (s.hidden_layers == 0) return static_cast<size_t>(s.out_dim) * s.in_dim + s.out_dim;
  size_t n = static_cast<size_t>(s.hidden_units) * s.in_dim + s.hidden_units;
  for (int l = 1; l < s.hidden_layers; ++l)
    n += static_cast<size_t>(s.hidden_units) * s.hidden_units + s.hidden_units;
  n += static_cast<size_t>(s.out_dim) * s.hidden_units + s.out_dim;
  return n;
}

size_t lstm_param_count(const EncoderSpec& s) {
  if (s.layers < 1 || s.hidden_dim < 1 || s.input_dim < 1)
    throw ValidationError("encoder spec: dims must be >= 1");
  size_t n = 0;
  for (int l = 0; l < s.layers; ++l) {
    int in = l == 0 ? s.input_dim : s.hidden_dim;
    n += 4ull * s.hidden_dim * in + 4ull * s.hidden_dim * s.hidden_dim + 4ull * s.hidden_dim;
  }
  return n;
}

size_t ParamLayout::add(const std::string& component, const std::string& tensor, size_t size) {
  entries.push_back({component, tensor, total, size});
  size_t off = total;
  total += size;
  return off;
}

const ParamLayout::Entry& ParamLayout::find(const std::string& component,
                                            const std::string& tensor) const {
  for (const auto& e : entries)
    if (e.component == component && e.tensor == tensor) return e;
  throw ValidationError("no layout entry " + component + "/" + tensor);
}

bool ParamLayout::has(const std::string& component, const std::string& tensor) const {
  for (const auto& e : entries)
    if (e.component == component && e.tensor == tensor) return true;
  return false;
}

double* ParamVector::slice(const std::string& component, const std::string& tensor) {
  return values.data() + layout->find(component, tensor).offset;
}

const double* ParamVector::slice(const std::string& component, const std::string& tensor) const {
  return values.data() + layout->find(component, tensor).offset;
}

ParamVector ParamVector::zeros_like() const {
  ParamVector z;
  z.layout = layout;
  z.values.assign(values.size(), 0.0);
  return z;
}

std::string save_checkpoint(const ParamVector& p) {
  nlohmann::json j;
  j["format"] = "hgs-params";
  j["version"] = 1;
  j["layout"] = nlohmann::json::array();
  for (const auto& e : p.layout->entries)
    j["layout"].push_back({{"component", e.component},
                           {"tensor", e.tensor},
                           {"offset", e.offset},
                           {"size", e.size}});
  j["values"] = p.values;
  return j.dump();
}

ParamVector load_checkpoint(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "hgs-params" || j.value("version", 0) != 1)
    throw ValidationError("not a version-1 hgs-params checkpoint");
  auto layout = std::make_shared<ParamLayout>();
  for (const auto& e : j.at("layout")) {
    size_t off = layout->add(e.at("component").get<std::string>(),
                             e.at("tensor").get<std::string>(), e.at("size").get<size_t>());
    if (off != e.at("offset").get<size_t>())
      throw ValidationError("checkpoint layout offsets are not contiguous");
  }
  ParamVector p(layout);
  p.values = j.at("values").get<std::vector<double>>();
  if (p.values.size() != layout->total)
    throw ValidationError("checkpoint value count does not match layout");
  return p;
}

// ---- MLP ------------------------------------------------------------------

void mlp_forward(const MlpSpec& s, const double* params, const double* in, double* out,
                 MlpCache* cache, Rng* dropout_rng, bool training) {
  const int H = s.hidden_layers;
  const int h = s.hidden_units;
  bool drop = training && s.dropout_rate > 0.0 && dropout_rng != nullptr;
  const double keep_p = 1.0 - s.dropout_rate;

  if (cache) {
    cache->input.assign(in, in + s.in_dim);
    cache->pre.assign(H, {});
    cache->act.assign(H, {});
    cache->keep.assign(drop ? H : 0, {});
  }

  std::vector<double> cur(in, in + s.in_dim);
  const double* p = params;
  int cur_dim = s.in_dim;
  for (int l = 0; l < H; ++l) {
    std::vector<double> pre(h);
    affine(p, p + static_cast<size_t>(h) * cur_dim, cur.data(), h, cur_dim, pre.data());
    p += static_cast<size_t>(h) * cur_dim + h;
    std::vector<double> act(h);
    for (int i = 0; i < h; ++i) act[i] = pre[i] > 0 ? pre[i] : 0.0;
    if (drop) {
      std::vector<char> keep(h);
      for (int i = 0; i < h; ++i) {
        keep[i] = dropout_rng->next_double() < keep_p;
        act[i] = keep[i] ? act[i] / keep_p : 0.0;
      }
      if (cache) cache->keep[l] = std::move(keep);
    }
    if (cache) {
      cache->pre[l] = std::move(pre);
      cache->act[l] = act;
    }
    cur = std::move(act);
    cur_dim = h;
  }
  affine(p, p + static_cast<size_t>(s.out_dim) * cur_dim, cur.data(), s.out_dim, cur_dim, out);
}

void mlp_backward(const MlpSpec& s, const double* params, const MlpCache& cache,
                  const double* dout, double* dparams, double* din) {
  const int H = s.hidden_layers;
  const int h = s.hidden_units;
  const double keep_p = 1.0 - s.dropout_rate;
  const bool dropped = !cache.keep.empty();

  // offsets of each layer's weight block
  std::vector<size_t> off(H + 1);
  size_t pos = 0;
  int cur_dim = s.in_dim;
  for (int l = 0; l < H; ++l) {
    off[l] = pos;
    pos += static_cast<size_t>(h) * cur_dim + h;
    cur_dim = h;
  }
  off[H] = pos;

  const double* last_in = H == 0 ? cache.input.data() : cache.act[H - 1].data();
  int last_dim = H == 0 ? s.in_dim : h;
  std::vector<double> dcur(last_dim, 0.0);
  affine_backward(params + off[H], last_in, dout, s.out_dim, last_dim,
                  dparams ? dparams + off[H] : nullptr,
                  dparams ? dparams + off[H] + static_cast<size_t>(s.out_dim) * last_dim : nullptr,
                  H == 0 ? din : dcur.data());

  for (int l = H - 1; l >= 0; --l) {
    for (int i = 0; i < h; ++i) {
      double d = dcur[i];
      if (dropped) d = cache.keep[l][i] ? d / keep_p : 0.0;
      dcur[i] = cache.pre[l][i] > 0 ? d : 0.0;  // ReLU subgradient at 0 is 0
    }
    int in_dim = l == 0 ? s.in_dim : h;
    const double* lin = l == 0 ? cache.input.data() : cache.act[l - 1].data();
    std::vector<double> dprev(in_dim, 0.0);
    affine_backward(params + off[l], lin, dcur.data(), h, in_dim,
                    dparams ? dparams + off[l] : nullptr,
                    dparams ? dparams + off[l] + static_cast<size_t>(h) * in_dim : nullptr,
                    l == 0 ? din : dprev.data());
    dcur = std::move(dprev);
  }
}

void init_mlp_params(const MlpSpec& s, double* params, Rng& rng) {
  const int H = s.hidden_layers;
  const int h = s.hidden_units;
  double* p = params;
  int cur_dim = s.in_dim;
  for (int l = 0; l < H; ++l) {
    double bound = 1.0 / std::sqrt(static_cast<double>(cur_dim));
    size_t n = static_cast<size_t>(h) * cur_dim + h;
    for (size_t i = 0; i < n; ++i) p[i] = rng.uniform(-bound, bound);
    p += n;
    cur_dim = h;
  }
  double bound = 1.0 / std::sqrt(static_cast<double>(cur_dim));
  size_t n = static_cast<size_t>(s.out_dim) * cur_dim + s.out_dim;
  for (size_t i = 0; i < n; ++i) p[i] = rng.uniform(-bound, bound);
}

// ---- LSTM -----------------------------------------------------------------

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LstmLayerView {
  const double* wx;
  const double* wh;
  const double* b;
  int in;
};

std::vector<LstmLayerView> lstm_views(const EncoderSpec& s, const double* params) {
  std::vector<LstmLayerView> views;
  const double* p = params;
  for (int l = 0; l < s.layers; ++l) {
    int in = l == 0 ? s.input_dim : s.hidden_dim;
    LstmLayerView v;
    v.wx = p;
    p += 4ull * s.hidden_dim * in;
    v.wh = p;
    p += 4ull * s.hidden_dim * s.hidden_dim;
    v.b = p;
    p += 4ull * s.hidden_dim;
    v.in = in;
    views.push_back(v);
  }
  return views;
}

}  // namespace

void lstm_forward(const EncoderSpec& s, const double* params, const Mat& seq, double* h_out,
                  LstmCache* cache) {
  if (seq.cols != s.input_dim) throw ValidationError("lstm_forward: sequence width mismatch");
  if (seq.rows < 1) throw ValidationError("lstm_forward: empty sequence");
  const int T = seq.rows;
  const int hd = s.hidden_dim;
  auto views = lstm_views(s, params);

  if (cache) {
    cache->T = T;
    auto init3 = [&](auto& v) { v.assign(s.layers, std::vector<std::vector<double>>(T)); };
    init3(cache->i);
    init3(cache->f);
    init3(cache->g);
    init3(cache->o);
    init3(cache->c);
    init3(cache->h);
    init3(cache->tanh_c);
    init3(cache->in);
  }

  std::vector<std::vector<double>> h(s.layers, std::vector<double>(hd, 0.0));
  std::vector<std::vector<double>> c(s.layers, std::vector<double>(hd, 0.0));
  std::vector<double> z(4 * hd);

  for (int t = 0; t < T; ++t) {
    std::vector<double> x(seq.row(t), seq.row(t) + seq.cols);
    for (int l = 0; l < s.layers; ++l) {
      const auto& v = views[l];
      affine(v.wx, v.b, x.data(), 4 * hd, v.in, z.data());
      for (int o = 0; o < 4 * hd; ++o) {
        double acc = z[o];
        const double* row = v.wh + static_cast<size_t>(o) * hd;
        for (int i = 0; i < hd; ++i) acc += row[i] * h[l][i];
        z[o] = acc;
      }
      std::vector<double> gi(hd), gf(hd), gg(hd), go(hd), tc(hd);
      for (int i = 0; i < hd; ++i) {
        gi[i] = sigmoid(z[i]);
        gf[i] = sigmoid(z[hd + i]);
        gg[i] = std::tanh(z[2 * hd + i]);
        go[i] = sigmoid(z[3 * hd + i]);
        c[l][i] = gf[i] * c[l][i] + gi[i] * gg[i];
        tc[i] = std::tanh(c[l][i]);
        h[l][i] = go[i] * tc[i];
      }
      if (cache) {
        cache->in[l][t] = x;
        cache->i[l][t] = gi;
        cache->f[l][t] = gf;
        cache->g[l][t] = gg;
        cache->o[l][t] = go;
        cache->c[l][t] = c[l];
        cache->tanh_c[l][t] = tc;
        cache->h[l][t] = h[l];
      }
      x = h[l];
    }
  }
  std::copy(h[s.layers - 1].begin(), h[s.layers - 1].end(), h_out);
}

void lstm_backward(const EncoderSpec& s, const double* params, const LstmCache& cache,
                   const double* dh_out, double* dparams) {
  const int T = cache.T;
  const int hd = s.hidden_dim;
  auto views = lstm_views(s, params);

  // gradient views share the parameter offsets
  std::vector<double*> dwx(s.layers), dwh(s.layers), db(s.layers);
  {
    double* p = dparams;
    for (int l = 0; l < s.layers; ++l) {
      int in = l == 0 ? s.input_dim : s.hidden_dim;
      dwx[l] = p;
      p += 4ull * hd * in;
      dwh[l] = p;
      p += 4ull * hd * hd;
      db[l] = p;
      p += 4ull * hd;
    }
  }

  // dx_next[t]: gradient into layer l's output h_l(t) coming from layer l+1
  std::vector<std::vector<double>> dx_next(T, std::vector<double>(hd, 0.0));

  for (int l = s.layers - 1; l >= 0; --l) {
    const auto& v = views[l];
    std::vector<double> dh(hd, 0.0), dc(hd, 0.0), dz(4 * hd);
    std::vector<std::vector<double>> dx_below(T, std::vector<double>(v.in, 0.0));

    if (l == s.layers - 1)
      for (int i = 0; i < hd; ++i) dh[i] = dh_out[i];

    for (int t = T - 1; t >= 0; --t) {
      if (l < s.layers - 1)
        for (int i = 0; i < hd; ++i) dh[i] += dx_next[t][i];

      const auto& gi = cache.i[l][t];
      const auto& gf = cache.f[l][t];
      const auto& gg = cache.g[l][t];
      const auto& go = cache.o[l][t];
      const auto& tc = cache.tanh_c[l][t];
      const double* c_prev = t > 0 ? cache.c[l][t - 1].data() : nullptr;

      for (int i = 0; i < hd; ++i) {
        double dtc = dh[i] * go[i];
        double dci = dc[i] + dtc * (1 - tc[i] * tc[i]);
        double dgo = dh[i] * tc[i];
        double dgi = dci * gg[i];
        double dgg = dci * gi[i];
        double dgf = dci * (c_prev ? c_prev[i] : 0.0);
        dz[i] = dgi * gi[i] * (1 - gi[i]);
        dz[hd + i] = dgf * gf[i] * (1 - gf[i]);
        dz[2 * hd + i] = dgg * (1 - gg[i] * gg[i]);
        dz[3 * hd + i] = dgo * go[i] * (1 - go[i]);
        dc[i] = dci * gf[i];
      }

      const double* x = cache.in[l][t].data();
      const double* h_prev = t > 0 ? cache.h[l][t - 1].data() : nullptr;
      std::vector<double> dh_prev(hd, 0.0);
      for (int o = 0; o < 4 * hd; ++o) {
        double d = dz[o];
        db[l][o] += d;
        double* dwx_row = dwx[l] + static_cast<size_t>(o) * v.in;
        const double* wx_row = v.wx + static_cast<size_t>(o) * v.in;
        for (int i = 0; i < v.in; ++i) {
          dwx_row[i] += d * x[i];
          dx_below[t][i] += d * wx_row[i];
        }
        if (h_prev) {
          double* dwh_row = dwh[l] + static_cast<size_t>(o) * hd;
          const double* wh_row = v.wh + static_cast<size_t>(o) * hd;
          for (int i = 0; i < hd; ++i) {
            dwh_row[i] += d * h_prev[i];
            dh_prev[i] += d * wh_row[i];
          }
        }
      }
      dh = std::move(dh_prev);
    }
    dx_next = std::move(dx_below);
  }
}

void init_lstm_params(const EncoderSpec& s, double* params, Rng& rng) {
  double* p = params;
  for (int l = 0; l < s.layers; ++l) {
    int in = l == 0 ? s.input_dim : s.hidden_dim;
    double bx = 1.0 / std::sqrt(static_cast<double>(in));
    for (size_t i = 0; i < 4ull * s.hidden_dim * in; ++i) *p++ = rng.uniform(-bx, bx);
    double bh = 1.0 / std::sqrt(static_cast<double>(s.hidden_dim));
    for (size_t i = 0; i < 4ull * s.hidden_dim * s.hidden_dim; ++i) *p++ = rng.uniform(-bh, bh);
    for (int i = 0; i < 4 * s.hidden_dim; ++i) *p++ = 0.0;  // biases start at zero
  }
}

// ---- generic gradient interface ----------------------------------------------

ParamVector grad(const LossFunction& f, const ParamVector& p) {
  ParamVector g = p.zeros_like();
  double val = f.value_and_grad(p, g);
  if (!std::isfinite(val)) throw NonFiniteError("loss is non-finite");
  if (!all_finite(g.values)) throw NonFiniteError("gradient has non-finite entries");
  return g;
}

double finite_diff_check(const LossFunction& f, const ParamVector& p, int n_coords, double h,
                         uint64_t seed) {
  ParamVector g = grad(f, p);
  size_t n = p.size();
  std::vector<size_t> coords;
  if (n_coords <= 0 || static_cast<size_t>(n_coords) >= n) {
    for (size_t i = 0; i < n; ++i) coords.push_back(i);
  } else {
    Rng rng(seed ^ 0x9d5ab1ull);
    std::vector<size_t> all(n);
    for (size_t i = 0; i < n; ++i) all[i] = i;
    for (int k = 0; k < n_coords; ++k) {
      size_t j = k + rng.below(n - k);
      std::swap(all[k], all[j]);
      coords.push_back(all[k]);
    }
  }

  double worst = 0.0;
  ParamVector probe = p;
  auto central = [&](size_t i, double step) {
    probe.values[i] = p.values[i] + step;
    double up = f.value(probe);
    probe.values[i] = p.values[i] - step;
    double dn = f.value(probe);
    probe.values[i] = p.values[i];
    return (up - dn) / (2 * step);
  };
  for (size_t i : coords) {
    double gi = g.values[i];
    double err = std::fabs(central(i, h) - gi) / (std::fabs(gi) + 1e-12);
    if (err > 1e-8) {
      // retry on a step ladder: a ReLU kink straddled at h clears at a smaller
      // step, cancellation noise on weakly-coupled coordinates clears at a
      // larger one; a wrong analytic gradient clears at none of them
      for (double step : {h / 10, 10 * h, 100 * h, 1000 * h})
        err = std::min(err, std::fabs(central(i, step) - gi) / (std::fabs(gi) + 1e-12));
    }
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace hgs::nn
