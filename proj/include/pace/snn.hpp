#pragma once

#include "pace/error.hpp"
#include "pace/parallel.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pace {

/// LIF constants: H = V + tau * (X - (V - v_reset)), S = [H >= v_th],
/// V' = H * (1 - S) + v_reset * S.
struct LifParams {
  double tau = 0.5;
  double v_th = 1.0;
  double v_reset = 0.0;

  void validate() const {
    require(tau > 0.0 && tau <= 1.0, "LIF tau must lie in (0, 1]");
    require(v_th > v_reset, "LIF threshold must exceed the reset potential");
  }
};

template <typename Scalar>
struct LifState {
  Scalar h;  // pre-reset potential
  Scalar s;  // spike
  Scalar v;  // post-reset potential
};

template <typename Scalar>
LifState<Scalar> lif_step(Scalar v_prev, Scalar x, const LifParams& p) {
  const Scalar h = v_prev + Scalar(p.tau) * (x - (v_prev - Scalar(p.v_reset)));
  const Scalar s = h >= Scalar(p.v_th) ? Scalar(1) : Scalar(0);
  const Scalar v = h * (Scalar(1) - s) + Scalar(p.v_reset) * s;
  return {h, s, v};
}

/// Rectangular pseudo-derivative of the spike function: 1/width inside
/// |offset| <= width/2, zero outside.
template <typename Scalar>
Scalar surrogate(Scalar offset, Scalar width) {
  using std::abs;
  return abs(offset) <= width / Scalar(2) ? Scalar(1) / width : Scalar(0);
}

enum class LayerKind { Conv2d, AvgPool, Flatten, Linear };

struct LayerSpec {
  LayerKind kind = LayerKind::Flatten;
  int out = 0;     // conv output channels / linear output features
  int kernel = 1;  // conv kernel or pooling window
  int stride = 1;
  int padding = 0;
  bool spiking = false;  // a LIF cell follows this layer
  LifParams lif;
  double init_gain = 1.0;  // extra factor on the fan-in init scale ("@G" token suffix)

  static LayerSpec conv(int out, int kernel = 3, int stride = 1, int padding = 1);
  static LayerSpec pool(int window);
  static LayerSpec flatten();
  static LayerSpec linear(int out, bool spiking = false);
};

struct Shape3 {
  int channels = 0;
  int height = 1;
  int width = 1;

  Eigen::Index pixels() const noexcept { return static_cast<Eigen::Index>(height) * width; }
  Eigen::Index size() const noexcept { return channels * pixels(); }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Feed-forward topology plus the input geometry it is configured for.
struct NetworkSpec {
  int steps = 1;
  Shape3 input;
  int classes = 2;
  double surrogate_width = 1.0;
  double init_gain = 1.0;  // multiplies the fan-in init scale of spiking layers; not part of equality
  std::vector<LayerSpec> layers;

  /// shapes()[i] is the input shape of layer i; the last entry is the output.
  std::vector<Shape3> shapes() const;
  void validate() const;

  /// Parse a layer list such as "conv:32:3 pool:2 conv:64:3 pool:2 flatten linear".
  /// Tokens: conv:OUT[:K[:STRIDE[:PAD]]], pool:K, flatten, linear[:OUT[:lif]].
  /// A trailing bare "linear" gets OUT = classes. Conv and linear tokens take
  /// an optional "@G" init-gain suffix, e.g. "linear:32:lif@8".
  static NetworkSpec parse(std::string_view layer_list, int steps, Shape3 input, int classes,
                           const LifParams& lif);
  std::string describe() const;

  /// Conv(3x3,32)-LIF-AvgPool2 -> Conv(3x3,64)-LIF-AvgPool2 -> Flatten -> Linear(K).
  static NetworkSpec desk(int steps, Shape3 input, int classes, const LifParams& lif = {});

  friend bool operator==(const NetworkSpec& a, const NetworkSpec& b);
};

/// Learnable tensors, one weight/bias pair per Conv2d or Linear layer in
/// layer order. Conv weights are out x (in * k * k).
struct Params {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  Params zeros_like() const;
  Params& operator+=(const Params& other);
  Params& operator*=(double scale);
  Eigen::Index count() const;
  friend bool operator==(const Params& a, const Params& b);
};

class Network {
 public:
  /// Kaiming fan-in normal weights and zero biases from `seed`.
  Network(NetworkSpec spec, std::uint64_t seed);
  Network(NetworkSpec spec, Params params);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const Params& params() const noexcept { return params_; }
  Params& params() noexcept { return params_; }

  int cell_count() const noexcept { return static_cast<int>(cell_layers_.size()); }
  /// Layer index hosting LIF cell `cell`.
  int cell_layer(int cell) const;
  /// Cell whose features feed the readout (last LIF before the final linear).
  int feature_cell() const noexcept { return cell_count() - 1; }
  Shape3 cell_shape(int cell) const;
  Eigen::Index feature_dim(int cell) const { return cell_shape(cell).size(); }
  int param_index(int layer) const { return param_index_[layer]; }

 private:
  void index_layers();

  NetworkSpec spec_;
  Params params_;
  std::vector<Shape3> shapes_;
  std::vector<int> param_index_;
  std::vector<int> cell_layers_;
};

/// Spike nonlinearity selection. Surrogate mode fires with a Heaviside step
/// and back-propagates through the rectangular surrogate with S detached in
/// the reset and densify multiplexers. Relaxed mode replaces the step with
/// sigmoid(slope * (H - v_th)) and differentiates everything exactly.
struct SimOptions {
  bool relaxed = false;
  double relaxed_slope = 4.0;
  bool full_trace = true;  // false keeps only the feature cell and logits
};

/// Per-cell record; every matrix is channels x (T * H * W), column t * H * W + p.
struct CellTrace {
  Shape3 shape;
  Eigen::MatrixXd h;      // pre-reset potential
  Eigen::MatrixXd s;      // spikes
  Eigen::MatrixXd v;      // post-reset potential
  Eigen::MatrixXd dense;  // densified feature
};

struct LayerTrace {
  std::vector<Eigen::MatrixXd> inputs;  // input of every layer (empty when not kept)
  std::vector<CellTrace> cells;
  Eigen::MatrixXd logits;  // classes x T
};

/// Gradient of a scalar loss with respect to trace outputs. Empty matrices
/// mean zero.
struct TraceGrad {
  std::vector<Eigen::MatrixXd> dense;   // per cell
  std::vector<Eigen::MatrixXd> spikes;  // per cell
  Eigen::MatrixXd logits;               // classes x T
};

struct GradReport {
  Eigen::MatrixXd input;
  Params params;
  double loss = 0.0;
};

LayerTrace forward(const Network& net, const Eigen::MatrixXd& input, const SimOptions& opts = {});
GradReport backward(const Network& net, const LayerTrace& trace, const TraceGrad& upstream,
                    const SimOptions& opts = {});

/// Time-averaged logits (classes x 1).
Eigen::VectorXd mean_logits(const LayerTrace& trace);

/// Cross-entropy of softmax(mean_t z_t) against `label`; writes dL/dz_t into
/// `grad` (classes x T) when non-null.
double time_averaged_cross_entropy(const Eigen::MatrixXd& logits, int label, Eigen::MatrixXd* grad);

/// Labeled network inputs.
struct Dataset {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<int> labels;
  int classes = 0;

  std::size_t size() const noexcept { return inputs.size(); }
  bool empty() const noexcept { return inputs.empty(); }
};

struct TrainOptions {
  int epochs = 10;
  double lr = 1e-3;
  int batch_size = 32;
  std::uint64_t seed = 0;
  bool adam = true;
  double momentum = 0.9;
};

struct TrainResult {
  Network net;
  double accuracy = 0.0;  // on the held-out set
  std::vector<double> epoch_loss;
};

/// Mini-batch training of all weights on the time-averaged cross-entropy.
TrainResult train_student(Network net, const Dataset& train, const Dataset& held_out,
                          const TrainOptions& opts);

std::vector<int> predict(const Network& net, const Dataset& data);
double accuracy(const Network& net, const Dataset& data);

/// Mean loss and mean parameter gradient of the cross-entropy over a set
/// of samples (reduced in index order).
std::pair<double, Params> cross_entropy_gradient(const Network& net, const Dataset& data,
                                                 const std::vector<std::size_t>& indices);

void save_network(const std::string& path, const Network& net);
Network load_network(const std::string& path);

}  // namespace pace
