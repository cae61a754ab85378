#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hgs/core.hpp"
#include "hgs/rng.hpp"

namespace hgs::nn {

/// Feed-forward network: `hidden_layers` affine+ReLU blocks then a final
/// affine layer. Defaults follow the experiment convention (2x16, ReLU,
/// dropout 0).
struct MlpSpec {
  int in_dim = 1;
  int hidden_layers = 2;
  int hidden_units = 16;
  int out_dim = 1;
  double dropout_rate = 0.0;
};

size_t mlp_param_count(const MlpSpec& s);

/// Stacked LSTM encoder; hidden_dim is sized to the state vector it produces.
struct EncoderSpec {
  int layers = 2;
  int hidden_dim = 1;
  int input_dim = 1;
};

size_t lstm_param_count(const EncoderSpec& s);

/// Flat parameter storage with a (component, tensor) -> index-range table.
struct ParamLayout {
  struct Entry {
    std::string component;
    std::string tensor;
    size_t offset = 0;
    size_t size = 0;
  };
  std::vector<Entry> entries;
  size_t total = 0;

  size_t add(const std::string& component, const std::string& tensor, size_t size);
  const Entry& find(const std::string& component, const std::string& tensor) const;
  bool has(const std::string& component, const std::string& tensor) const;
};

struct ParamVector {
  std::shared_ptr<const ParamLayout> layout;
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(std::shared_ptr<const ParamLayout> l)
      : layout(std::move(l)), values(layout->total, 0.0) {}

  size_t size() const { return values.size(); }
  double* slice(const std::string& component, const std::string& tensor);
  const double* slice(const std::string& component, const std::string& tensor) const;
  ParamVector zeros_like() const;
};

/// Checkpoint = versioned header + layout table + value array (JSON).
std::string save_checkpoint(const ParamVector& p);
ParamVector load_checkpoint(const std::string& text);

// ---- MLP ------------------------------------------------------------------

/// Per-evaluation activations retained for the backward pass.
struct MlpCache {
  std::vector<double> input;
  std::vector<std::vector<double>> pre;   // pre-activation per hidden layer
  std::vector<std::vector<double>> act;   // post-ReLU (and dropout) per hidden layer
  std::vector<std::vector<char>> keep;    // dropout keep masks (training only)
};

/// out = MLP(in). `cache` may be null when no backward pass follows. Dropout
/// fires only when `training` and an RNG is supplied.
void mlp_forward(const MlpSpec& s, const double* params, const double* in, double* out,
                 MlpCache* cache = nullptr, Rng* dropout_rng = nullptr, bool training = false);

/// Accumulates parameter gradients into dparams and input gradients into din
/// (either may be null). ReLU subgradient at 0 is 0.
void mlp_backward(const MlpSpec& s, const double* params, const MlpCache& cache,
                  const double* dout, double* dparams, double* din);

/// U(-1/sqrt(fan_in), +1/sqrt(fan_in)) for weights and biases.
void init_mlp_params(const MlpSpec& s, double* params, Rng& rng);

// ---- LSTM -----------------------------------------------------------------

struct LstmCache {
  int T = 0;
  // indexed [layer][t]: gate activations and states needed for BPTT
  std::vector<std::vector<std::vector<double>>> i, f, g, o, c, h, tanh_c;
  std::vector<std::vector<std::vector<double>>> in;  // layer input at t
};

/// Runs the recurrence over `seq` (T x input_dim) and writes the final
/// top-layer hidden state (hidden_dim) to h_out.
void lstm_forward(const EncoderSpec& s, const double* params, const Mat& seq, double* h_out,
                  LstmCache* cache = nullptr);

/// BPTT from the gradient of the final top-layer hidden state.
void lstm_backward(const EncoderSpec& s, const double* params, const LstmCache& cache,
                   const double* dh_out, double* dparams);

/// Weights U(+-1/sqrt(fan_in)); biases 0.
void init_lstm_params(const EncoderSpec& s, double* params, Rng& rng);

// ---- generic gradient interface --------------------------------------------

/// A scalar loss of the parameters with a reverse-mode gradient.
class LossFunction {
 public:
  virtual ~LossFunction() = default;
  virtual double value(const ParamVector& p) const = 0;
  /// Returns the loss and fills `grad` (same layout as p).
  virtual double value_and_grad(const ParamVector& p, ParamVector& grad) const = 0;
};

/// Reverse-mode gradient; throws NonFiniteError when the loss or any
/// gradient entry is non-finite.
ParamVector grad(const LossFunction& f, const ParamVector& p);

/// Max over sampled coordinates of |central-difference - grad| / (|grad|+1e-12).
/// Each coordinate is also retried at h/10 and the better agreement kept,
/// which flags ReLU-kink straddles instead of failing on them.
double finite_diff_check(const LossFunction& f, const ParamVector& p, int n_coords, double h,
                         uint64_t seed = 0);

}  // namespace hgs::nn
