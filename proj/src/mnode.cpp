#include "hgs/mnode.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace hgs::mnode {

ShareMap apply_weight_sharing(const SuperGraph& g) {
  ShareMap share;
  for (const auto& n : g.nodes) {
    if (n.kind != graph::NodeKind::Latent) continue;
    std::vector<Edge> in, out;
    for (const auto& e : g.edges) {
      if (e.second == n.id) in.push_back(e);
      if (e.first == n.id) out.push_back(e);
    }
    if (in.size() == 1 && out.size() == 1 && !(in[0] == out[0])) share[out[0]] = in[0];
  }
  return share;
}

namespace {

Edge resolve_share(const ShareMap& share, Edge e) {
  std::set<Edge> seen;
  Edge best = e;
  while (true) {
    auto it = share.find(e);
    if (it == share.end() || it->second == e) return e;
    if (!seen.insert(e).second) return best;  // cycle of shared edges: smallest wins
    e = it->second;
    best = std::min(best, e);
  }
}

}  // namespace

int Model::weight_index(const Edge& e) const {
  if (!cfg.weighted) return -1;
  Edge c = resolve_share(share, e);
  auto it = std::lower_bound(canonical_edges.begin(), canonical_edges.end(), c);
  if (it == canonical_edges.end() || !(*it == c))
    throw ValidationError("weight_index: edge not in model: " + e.first + "->" + e.second);
  return static_cast<int>(it - canonical_edges.begin());
}

double Model::edge_weight(const nn::ParamVector& p, const Edge& e) const {
  int idx = weight_index(e);
  return idx < 0 ? 1.0 : p.slice("edges", "w")[idx];
}

std::vector<size_t> Model::first_layer_indices(const Edge& e) const {
  for (const auto& node : states) {
    if (node.id != e.second) continue;
    for (const auto& par : node.parents) {
      if (!(par.edge == e)) continue;
      const auto& entry = layout->find("node:" + node.id, "l0.w");
      int rows = node.mlp.hidden_layers > 0 ? node.mlp.hidden_units : node.mlp.out_dim;
      int in_dim = node.mlp.in_dim;
      // locate the column offset of this parent inside the MLP input
      int col = 0;
      for (const auto& q : node.parents) {
        if (&q == &par) break;
        col += q.dim;
      }
      std::vector<size_t> idx;
      for (int r = 0; r < rows; ++r)
        for (int d = 0; d < par.dim; ++d)
          idx.push_back(entry.offset + static_cast<size_t>(r) * in_dim + col + d);
      return idx;
    }
  }
  throw ValidationError("first_layer_indices: edge not in model: " + e.first + "->" + e.second);
}

std::vector<size_t> Model::decoder_indices() const {
  std::vector<size_t> idx;
  for (const auto& e : layout->entries)
    if (e.component.rfind("node:", 0) == 0)
      for (size_t i = 0; i < e.size; ++i) idx.push_back(e.offset + i);
  return idx;
}

std::vector<size_t> Model::encoder_indices() const {
  std::vector<size_t> idx;
  for (const auto& e : layout->entries)
    if (e.component == "encoder")
      for (size_t i = 0; i < e.size; ++i) idx.push_back(e.offset + i);
  return idx;
}

std::vector<size_t> Model::weight_indices() const {
  std::vector<size_t> idx;
  for (const auto& e : layout->entries)
    if (e.component == "edges")
      for (size_t i = 0; i < e.size; ++i) idx.push_back(e.offset + i);
  return idx;
}

Model build_model(const SuperGraph& g, const DataShape& shape, const ModelConfig& cfg) {
  g.validate();
  Model m;
  m.graph = g;
  m.cfg = cfg;

  // states and inputs, id-sorted
  std::vector<std::string> state_ids, input_ids;
  for (const auto& id : g.node_ids()) {
    if (g.node(id).kind == graph::NodeKind::Input)
      input_ids.push_back(id);
    else
      state_ids.push_back(id);
  }
  if (state_ids.empty()) throw ValidationError("build_model: graph has no state nodes");

  int state_off = 0, obs_off = 0;
  for (const auto& id : state_ids) {
    StateNode sn;
    sn.id = id;
    sn.dim = g.node(id).dim;
    sn.offset = state_off;
    state_off += sn.dim;
    if (g.node(id).kind == graph::NodeKind::Observable) {
      sn.obs_offset = obs_off;
      obs_off += sn.dim;
    }
    m.states.push_back(std::move(sn));
  }
  m.state_dim = state_off;
  m.obs_dim = obs_off;
  if (m.obs_dim != shape.obs_cols)
    throw ValidationError("build_model: dataset has " + std::to_string(shape.obs_cols) +
                          " observable columns, graph expects " + std::to_string(m.obs_dim));

  // input binding: named channel if available, else positional in id order
  int k = 0;
  for (const auto& id : input_ids) {
    const auto& node = g.node(id);
    if (node.dim != 1)
      throw ValidationError("build_model: input super-node must have dim 1: " + id);
    InputNode in;
    in.id = id;
    int channel = -1;
    if (!shape.input_channels.empty()) {
      std::vector<std::string> candidates;
      if (!node.members.empty()) candidates.push_back(*node.members.begin());
      candidates.push_back(id);
      if (id.rfind("sc_", 0) == 0) candidates.push_back(id.substr(3));
      for (const auto& cand : candidates) {
        auto it = std::find(shape.input_channels.begin(), shape.input_channels.end(), cand);
        if (it != shape.input_channels.end()) {
          channel = static_cast<int>(it - shape.input_channels.begin());
          break;
        }
      }
      if (channel < 0)
        throw ValidationError("build_model: no dataset channel for input node " + id);
    } else {
      channel = k;
    }
    if (channel >= shape.input_cols)
      throw ValidationError("build_model: input channel out of range for node " + id);
    in.channel = channel;
    m.inputs.push_back(in);
    ++k;
  }

  if (cfg.weighted) {
    if (cfg.use_sharing) m.share = apply_weight_sharing(g);
    std::set<Edge> canon;
    for (const auto& e : g.edges) canon.insert(resolve_share(m.share, e));
    m.canonical_edges.assign(canon.begin(), canon.end());
  }

  // wire parents: state parents first, then input parents, both id-sorted
  std::map<std::string, int> input_channel_of;
  for (const auto& in : m.inputs) input_channel_of[in.id] = in.channel;
  std::map<std::string, int> state_offset_of;
  std::map<std::string, int> state_dim_of;
  for (const auto& sn : m.states) {
    state_offset_of[sn.id] = sn.offset;
    state_dim_of[sn.id] = sn.dim;
  }

  for (auto& sn : m.states) {
    std::vector<Edge> in_edges;
    for (const auto& e : g.edges)
      if (e.second == sn.id) in_edges.push_back(e);
    std::sort(in_edges.begin(), in_edges.end());
    int in_dim = 0;
    for (int pass = 0; pass < 2; ++pass) {  // pass 0: states, pass 1: inputs
      for (const auto& e : in_edges) {
        bool from_input = input_channel_of.count(e.first) > 0;
        if ((pass == 0) == from_input) continue;
        Parent par;
        par.is_input = from_input;
        par.edge = e;
        par.dim = from_input ? 1 : state_dim_of.at(e.first);
        par.feat_offset = from_input ? input_channel_of.at(e.first) : state_offset_of.at(e.first);
        if (cfg.weighted) {
          Edge c = resolve_share(m.share, e);
          par.weight_idx = static_cast<int>(
              std::lower_bound(m.canonical_edges.begin(), m.canonical_edges.end(), c) -
              m.canonical_edges.begin());
        }
        sn.parents.push_back(par);
        in_dim += par.dim;
      }
    }
    if (cfg.time_input) in_dim += 1;
    sn.mlp.in_dim = std::max(1, in_dim);  // parentless nodes see one constant-zero feature
    sn.mlp.hidden_layers = cfg.hidden_layers;
    sn.mlp.hidden_units = cfg.hidden_units;
    sn.mlp.out_dim = sn.dim;
    sn.mlp.dropout_rate = cfg.dropout_rate;
  }

  m.use_encoder = shape.p > 0;
  auto layout = std::make_shared<nn::ParamLayout>();
  if (m.use_encoder) {
    m.encoder.layers = cfg.encoder_layers;
    m.encoder.hidden_dim = m.state_dim;
    m.encoder.input_dim = m.obs_dim + static_cast<int>(m.inputs.size());
    for (int l = 0; l < m.encoder.layers; ++l) {
      int in = l == 0 ? m.encoder.input_dim : m.encoder.hidden_dim;
      layout->add("encoder", "l" + std::to_string(l) + ".wx", 4ull * m.encoder.hidden_dim * in);
      layout->add("encoder", "l" + std::to_string(l) + ".wh",
                  4ull * m.encoder.hidden_dim * m.encoder.hidden_dim);
      layout->add("encoder", "l" + std::to_string(l) + ".b", 4ull * m.encoder.hidden_dim);
    }
  }
  for (const auto& sn : m.states) {
    const auto& s = sn.mlp;
    int cur = s.in_dim;
    for (int l = 0; l < s.hidden_layers; ++l) {
      layout->add("node:" + sn.id, "l" + std::to_string(l) + ".w",
                  static_cast<size_t>(s.hidden_units) * cur);
      layout->add("node:" + sn.id, "l" + std::to_string(l) + ".b", s.hidden_units);
      cur = s.hidden_units;
    }
    layout->add("node:" + sn.id, "l" + std::to_string(s.hidden_layers) + ".w",
                static_cast<size_t>(s.out_dim) * cur);
    layout->add("node:" + sn.id, "l" + std::to_string(s.hidden_layers) + ".b", s.out_dim);
  }
  if (cfg.weighted && !m.canonical_edges.empty())
    layout->add("edges", "w", m.canonical_edges.size());

  m.layout = layout;
  m.params = nn::ParamVector(layout);
  return m;
}

void init_params(Model& m, uint64_t seed) {
  Rng rng(seed);
  if (m.use_encoder)
    nn::init_lstm_params(m.encoder, m.params.slice("encoder", "l0.wx"), rng);
  for (const auto& sn : m.states)
    nn::init_mlp_params(sn.mlp, m.params.slice("node:" + sn.id, "l0.w"), rng);
  if (m.cfg.weighted && !m.canonical_edges.empty()) {
    double* w = m.params.slice("edges", "w");
    for (size_t i = 0; i < m.canonical_edges.size(); ++i) w[i] = 1.0;
  }
}

namespace {

Mat encoder_input(const Model& m, const data::Instance& inst) {
  int p = inst.p();
  Mat in(p, m.encoder.input_dim);
  for (int t = 0; t < p; ++t) {
    double* row = in.row(t);
    for (int j = 0; j < m.obs_dim; ++j) row[j] = inst.past_obs.at(t, j);
    for (size_t i = 0; i < m.inputs.size(); ++i)
      row[m.obs_dim + i] = inst.past_inputs.at(t, m.inputs[i].channel);
  }
  return in;
}

void check_shapes(const Model& m, const data::Instance& inst) {
  if (inst.past_obs.rows < 1 || inst.past_obs.cols != m.obs_dim)
    throw ValidationError("instance past_obs shape mismatch");
  if (inst.past_inputs.rows != inst.p())
    throw ValidationError("instance past_inputs rows must equal p");
  int needed = 0;
  for (const auto& in : m.inputs) needed = std::max(needed, in.channel + 1);
  if (!m.inputs.empty() &&
      (inst.future_inputs.cols < needed || (inst.p() > 0 && inst.past_inputs.cols < needed)))
    throw ValidationError("instance input columns do not cover the model's channels");
}

}  // namespace

std::vector<double> initial_condition(const Model& m, const nn::ParamVector& p,
                                      const data::Instance& inst, Trace* trace) {
  check_shapes(m, inst);
  std::vector<double> state(m.state_dim, 0.0);
  if (m.use_encoder && inst.p() > 0) {
    Mat enc_in = encoder_input(m, inst);
    nn::lstm_forward(m.encoder, p.slice("encoder", "l0.wx"), enc_in, state.data(),
                     trace ? &trace->enc_cache : nullptr);
    if (trace) trace->enc_in = std::move(enc_in);
  }
  // observed values at t_0 overwrite the observable entries
  int t0_row = inst.past_obs.rows - 1;
  for (const auto& sn : m.states) {
    if (sn.obs_offset < 0) continue;
    for (int d = 0; d < sn.dim; ++d)
      state[sn.offset + d] = inst.past_obs.at(t0_row, sn.obs_offset + d);
  }
  if (trace) trace->init_state = state;
  return state;
}

Mat rollout(const Model& m, const nn::ParamVector& p, const std::vector<double>& init,
            const Mat& future_inputs, Trace* trace, std::vector<double>* final_state) {
  if (static_cast<int>(init.size()) != m.state_dim)
    throw ValidationError("rollout: init state has wrong dimension");
  const int q = future_inputs.rows;
  const double* w = m.cfg.weighted && !m.canonical_edges.empty() ? p.slice("edges", "w") : nullptr;

  std::vector<double> state = init;
  Mat preds(q, m.obs_dim);
  if (trace) {
    trace->states.clear();
    trace->caches.assign(q, {});
    trace->states.push_back(state);
  }

  std::vector<double> in_vec, out_vec, delta(m.state_dim);
  for (int h = 0; h < q; ++h) {
    const double* xrow = future_inputs.row(h);
    if (trace) trace->caches[h].resize(m.states.size());
    for (size_t ni = 0; ni < m.states.size(); ++ni) {
      const auto& sn = m.states[ni];
      in_vec.assign(sn.mlp.in_dim, 0.0);
      int pos = 0;
      for (const auto& par : sn.parents) {
        double wgt = par.weight_idx >= 0 ? w[par.weight_idx] : 1.0;
        if (par.is_input) {
          in_vec[pos++] = wgt * xrow[par.feat_offset];
        } else {
          for (int d = 0; d < par.dim; ++d) in_vec[pos++] = wgt * state[par.feat_offset + d];
        }
      }
      if (m.cfg.time_input) in_vec[pos++] = q > 1 ? static_cast<double>(h) / (q - 1) : 0.0;
      out_vec.assign(sn.dim, 0.0);
      nn::mlp_forward(sn.mlp, p.slice("node:" + sn.id, "l0.w"), in_vec.data(), out_vec.data(),
                      trace ? &trace->caches[h][ni] : nullptr);
      for (int d = 0; d < sn.dim; ++d) delta[sn.offset + d] = out_vec[d];
    }
    for (int j = 0; j < m.state_dim; ++j) {
      state[j] += m.cfg.delta_t * delta[j];
      if (!std::isfinite(state[j]) || std::fabs(state[j]) > m.cfg.state_guard)
        throw NonFiniteError("rollout: state blow-up at step " + std::to_string(h + 1));
    }
    for (const auto& sn : m.states)
      if (sn.obs_offset >= 0)
        for (int d = 0; d < sn.dim; ++d) preds.at(h, sn.obs_offset + d) = state[sn.offset + d];
    if (trace) trace->states.push_back(state);
  }
  if (final_state) *final_state = state;
  if (trace) trace->preds = preds;
  return preds;
}

Mat predict(const Model& m, const nn::ParamVector& p, const data::Instance& inst, Trace* trace) {
  auto init = initial_condition(m, p, inst, trace);
  return rollout(m, p, init, inst.future_inputs, trace);
}

void backward(const Model& m, const nn::ParamVector& p, const data::Instance& inst,
              const Trace& trace, const Mat& dpreds, nn::ParamVector& grad) {
  const int q = dpreds.rows;
  const double* w = m.cfg.weighted && !m.canonical_edges.empty() ? p.slice("edges", "w") : nullptr;
  double* dw = m.cfg.weighted && !m.canonical_edges.empty() ? grad.slice("edges", "w") : nullptr;

  std::vector<double> dstate(m.state_dim, 0.0);
  std::vector<double> din, dout;
  for (int h = q - 1; h >= 0; --h) {
    for (const auto& sn : m.states)
      if (sn.obs_offset >= 0)
        for (int d = 0; d < sn.dim; ++d) dstate[sn.offset + d] += dpreds.at(h, sn.obs_offset + d);

    const auto& state_h = trace.states[h];
    const double* xrow = inst.future_inputs.row(h);
    std::vector<double> dstate_prev = dstate;  // identity part of the Euler update
    for (size_t ni = 0; ni < m.states.size(); ++ni) {
      const auto& sn = m.states[ni];
      dout.assign(sn.dim, 0.0);
      bool any = false;
      for (int d = 0; d < sn.dim; ++d) {
        dout[d] = m.cfg.delta_t * dstate[sn.offset + d];
        any |= dout[d] != 0.0;
      }
      if (!any) continue;
      din.assign(sn.mlp.in_dim, 0.0);
      nn::mlp_backward(sn.mlp, p.slice("node:" + sn.id, "l0.w"), trace.caches[h][ni], dout.data(),
                       grad.slice("node:" + sn.id, "l0.w"), din.data());
      int pos = 0;
      for (const auto& par : sn.parents) {
        double wgt = par.weight_idx >= 0 ? w[par.weight_idx] : 1.0;
        if (par.is_input) {
          if (dw && par.weight_idx >= 0) dw[par.weight_idx] += xrow[par.feat_offset] * din[pos];
          ++pos;
        } else {
          for (int d = 0; d < par.dim; ++d) {
            double g = din[pos + d];
            dstate_prev[par.feat_offset + d] += wgt * g;
            if (dw && par.weight_idx >= 0) dw[par.weight_idx] += state_h[par.feat_offset + d] * g;
          }
          pos += par.dim;
        }
      }
    }
    dstate = std::move(dstate_prev);
  }

  if (m.use_encoder && inst.p() > 0) {
    // observable entries of the initial state were overwritten, so their adjoints stop here
    for (const auto& sn : m.states)
      if (sn.obs_offset >= 0)
        for (int d = 0; d < sn.dim; ++d) dstate[sn.offset + d] = 0.0;
    nn::lstm_backward(m.encoder, p.slice("encoder", "l0.wx"), trace.enc_cache, dstate.data(),
                      grad.slice("encoder", "l0.wx"));
  }
}

// ---- checkpoint ----------------------------------------------------------------

std::string save_model(const Model& m) {
  nlohmann::json j;
  j["format"] = "hgs-model";
  j["version"] = 1;
  j["config"] = {{"delta_t", m.cfg.delta_t},
                 {"time_input", m.cfg.time_input},
                 {"weighted", m.cfg.weighted},
                 {"use_sharing", m.cfg.use_sharing},
                 {"state_guard", m.cfg.state_guard},
                 {"hidden_layers", m.cfg.hidden_layers},
                 {"hidden_units", m.cfg.hidden_units},
                 {"dropout_rate", m.cfg.dropout_rate},
                 {"encoder_layers", m.cfg.encoder_layers}};
  j["graph"] = nlohmann::json::parse(graph::to_json(m.graph));
  j["share"] = nlohmann::json::object();
  for (const auto& [e, c] : m.share)
    j["share"][e.first + "->" + e.second] = c.first + "->" + c.second;
  j["inputs"] = nlohmann::json::array();
  for (const auto& in : m.inputs) j["inputs"].push_back({{"id", in.id}, {"channel", in.channel}});
  j["p"] = m.use_encoder ? 1 : 0;
  j["obs_cols"] = m.obs_dim;
  j["params"] = nlohmann::json::parse(nn::save_checkpoint(m.params));
  return j.dump();
}

Model load_model(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "hgs-model" || j.value("version", 0) != 1)
    throw ValidationError("not a version-1 hgs-model checkpoint");
  auto g = graph::super_from_json(j.at("graph").dump());
  ModelConfig cfg;
  const auto& c = j.at("config");
  cfg.delta_t = c.at("delta_t");
  cfg.time_input = c.at("time_input");
  cfg.weighted = c.at("weighted");
  cfg.use_sharing = c.at("use_sharing");
  cfg.state_guard = c.at("state_guard");
  cfg.hidden_layers = c.at("hidden_layers");
  cfg.hidden_units = c.at("hidden_units");
  cfg.dropout_rate = c.at("dropout_rate");
  cfg.encoder_layers = c.at("encoder_layers");

  DataShape shape;
  shape.p = j.at("p").get<int>();
  shape.obs_cols = j.at("obs_cols").get<int>();
  int max_chan = 0;
  for (const auto& in : j.at("inputs")) max_chan = std::max(max_chan, in.at("channel").get<int>() + 1);
  shape.input_cols = std::max<int>(max_chan, j.at("inputs").size());

  Model m = build_model(g, shape, cfg);
  for (const auto& in : j.at("inputs")) {
    for (auto& mi : m.inputs)
      if (mi.id == in.at("id").get<std::string>()) mi.channel = in.at("channel").get<int>();
  }
  // re-wire parent channels after the binding override
  std::map<std::string, int> chan;
  for (const auto& mi : m.inputs) chan[mi.id] = mi.channel;
  for (auto& sn : m.states)
    for (auto& par : sn.parents)
      if (par.is_input) par.feat_offset = chan.at(par.edge.first);

  auto params = nn::load_checkpoint(j.at("params").dump());
  if (params.size() != m.params.size())
    throw ValidationError("model checkpoint parameter count mismatch");
  m.params.values = params.values;
  return m;
}

}  // namespace hgs::mnode
