#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hgs/dataset.hpp"
#include "hgs/graph.hpp"
#include "hgs/nn.hpp"

namespace hgs::mnode {

using graph::Edge;
using graph::SuperGraph;

/// Weight-sharing constraint: a latent node with exactly one incoming and one
/// outgoing edge shares the outgoing edge's weight with the incoming one.
/// Self-loops count on both sides of the "exactly one" test.
using ShareMap = std::map<Edge, Edge>;
ShareMap apply_weight_sharing(const SuperGraph& g);

struct ModelConfig {
  double delta_t = 1.0;     // forward-Euler step of the decoder
  bool time_input = false;  // feed t (scaled to [0,1] over the window) to each MLP
  bool weighted = true;     // carry per-edge gating weights
  bool use_sharing = true;
  double state_guard = 1e12;  // |state| beyond this raises NonFiniteError
  int hidden_layers = 2;
  int hidden_units = 16;
  double dropout_rate = 0.0;
  int encoder_layers = 2;
};

/// Shapes the model is built against (taken from a Dataset).
struct DataShape {
  int p = 0;  // history length; 0 disables the encoder
  int obs_cols = 1;
  int input_cols = 0;
  std::vector<std::string> input_channels;  // optional names for binding
};

struct Parent {
  bool is_input = false;
  int feat_offset = 0;  // into the state vector or the bound-input vector
  int dim = 1;
  int weight_idx = -1;  // canonical weight index; -1 when unweighted
  Edge edge;
};

struct StateNode {
  std::string id;
  int dim = 1;
  int offset = 0;      // into the state vector
  int obs_offset = -1; // into the observation vector; -1 for latent nodes
  nn::MlpSpec mlp;
  std::vector<Parent> parents;  // state parents then input parents, id-sorted
};

struct InputNode {
  std::string id;
  int channel = 0;  // dataset column carrying this input
};

/// A graph-structured neural ODE forecaster: per-state-node MLPs wired by the
/// super-graph, per-edge gating weights (optionally shared), and an LSTM
/// encoder that estimates latent initial conditions from history.
struct Model {
  SuperGraph graph;
  ModelConfig cfg;
  std::vector<StateNode> states;  // sorted by id
  std::vector<InputNode> inputs;  // sorted by id
  int state_dim = 0;
  int obs_dim = 0;
  bool use_encoder = false;
  nn::EncoderSpec encoder;
  std::vector<Edge> canonical_edges;  // id of weight i = canonical_edges[i]
  ShareMap share;
  std::shared_ptr<const nn::ParamLayout> layout;
  nn::ParamVector params;

  int weight_index(const Edge& e) const;  // resolves sharing; -1 if unweighted
  double edge_weight(const nn::ParamVector& p, const Edge& e) const;
  /// Flat indices of the first-layer MLP columns fed by edge (u,v).
  std::vector<size_t> first_layer_indices(const Edge& e) const;
  /// Flat indices of all decoder (MLP) parameters.
  std::vector<size_t> decoder_indices() const;
  std::vector<size_t> encoder_indices() const;
  std::vector<size_t> weight_indices() const;
};

Model build_model(const SuperGraph& g, const DataShape& shape, const ModelConfig& cfg);

/// Seeded initialization: MLP/LSTM per nn conventions, edge weights at 1.0.
void init_params(Model& m, uint64_t seed);

/// Everything the backward pass needs from a forward rollout.
struct Trace {
  std::vector<std::vector<double>> states;         // S(t_0) .. S(t_q)
  std::vector<std::vector<nn::MlpCache>> caches;   // [step][state node]
  nn::LstmCache enc_cache;
  Mat enc_in;
  std::vector<double> init_state;
  Mat preds;
};

/// Encoder output reshaped to the state vector, observable entries overwritten
/// by the observed values at t_0. With p = 0 the encoder is bypassed and the
/// state vector is the known initial condition.
std::vector<double> initial_condition(const Model& m, const nn::ParamVector& p,
                                      const data::Instance& inst, Trace* trace = nullptr);

/// Forward-Euler rollout from `init` under the future inputs; returns the
/// observable trajectory at t_1..t_q. Throws NonFiniteError on blow-up.
Mat rollout(const Model& m, const nn::ParamVector& p, const std::vector<double>& init,
            const Mat& future_inputs, Trace* trace = nullptr,
            std::vector<double>* final_state = nullptr);

Mat predict(const Model& m, const nn::ParamVector& p, const data::Instance& inst,
            Trace* trace = nullptr);

/// Accumulates d(loss)/d(params) given d(loss)/d(predictions); the trace must
/// come from the matching forward pass on the same instance.
void backward(const Model& m, const nn::ParamVector& p, const data::Instance& inst,
              const Trace& trace, const Mat& dpreds, nn::ParamVector& grad);

/// Model checkpoint: graph JSON + parameter checkpoint + share map + config echo.
std::string save_model(const Model& m);
Model load_model(const std::string& text);

}  // namespace hgs::mnode
