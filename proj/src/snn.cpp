#include "pace/snn.hpp"

#include "pace/container.hpp"
#include "pace/densify.hpp"
#include "pace/optim.hpp"
#include "pace/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <sstream>

namespace pace {

using Eigen::ArrayXXd;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

int thread_count() {
  if (const char* env = std::getenv("PACE_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Topology

LayerSpec LayerSpec::conv(int out, int kernel, int stride, int padding) {
  LayerSpec l;
  l.kind = LayerKind::Conv2d;
  l.out = out;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.spiking = true;
  return l;
}

LayerSpec LayerSpec::pool(int window) {
  LayerSpec l;
  l.kind = LayerKind::AvgPool;
  l.kernel = window;
  return l;
}

LayerSpec LayerSpec::flatten() { return LayerSpec{}; }

LayerSpec LayerSpec::linear(int out, bool spiking) {
  LayerSpec l;
  l.kind = LayerKind::Linear;
  l.out = out;
  l.spiking = spiking;
  return l;
}

std::vector<Shape3> NetworkSpec::shapes() const {
  std::vector<Shape3> out{input};
  Shape3 s = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + ": ";
    switch (l.kind) {
      case LayerKind::Conv2d: {
        if (l.out < 1 || l.kernel < 1 || l.stride < 1 || l.padding < 0)
          throw Error(ErrorKind::Config, where + "invalid conv parameters");
        const int h = (s.height + 2 * l.padding - l.kernel) / l.stride + 1;
        const int w = (s.width + 2 * l.padding - l.kernel) / l.stride + 1;
        if (h < 1 || w < 1)
          throw Error(ErrorKind::Config, where + "conv does not fit its input");
        s = {l.out, h, w};
        break;
      }
      case LayerKind::AvgPool:
        if (l.kernel < 1 || s.height < l.kernel || s.width < l.kernel)
          throw Error(ErrorKind::Config, where + "pool window does not fit its input");
        s = {s.channels, s.height / l.kernel, s.width / l.kernel};
        break;
      case LayerKind::Flatten:
        s = {static_cast<int>(s.size()), 1, 1};
        break;
      case LayerKind::Linear:
        if (s.height != 1 || s.width != 1) throw Error(ErrorKind::Config, where + "linear layer needs a flatten first");
        if (l.out < 1) throw Error(ErrorKind::Config, where + "linear layer needs positive width");
        s = {l.out, 1, 1};
        break;
    }
    out.push_back(s);
  }
  return out;
}

void NetworkSpec::validate() const {
  if (steps < 1) throw Error(ErrorKind::Config, "network needs T >= 1");
  if (input.channels < 1 || input.height < 1 || input.width < 1)
    throw Error(ErrorKind::Config, "network input shape must be positive");
  if (classes < 2) throw Error(ErrorKind::Config, "network needs at least two classes");
  if (!(surrogate_width > 0.0)) throw Error(ErrorKind::Config, "surrogate width must be positive");
  if (!(init_gain > 0.0)) throw Error(ErrorKind::Config, "init gain must be positive");
  if (layers.empty() || layers.back().kind != LayerKind::Linear || layers.back().spiking ||
      layers.back().out != classes)
    throw Error(ErrorKind::Config, "final layer must be a non-spiking linear readout with one output per class");
  int cells = 0;
  for (const auto& l : layers) {
    if (l.spiking) {
      ++cells;
      try {
        l.lif.validate();
      } catch (const Error& e) {
        throw Error(ErrorKind::Config, e.what());
      }
    }
  }
  if (cells == 0) throw Error(ErrorKind::Config, "network has no LIF cell to match features on");
  (void)shapes();
}

NetworkSpec NetworkSpec::parse(std::string_view layer_list, int steps, Shape3 input, int classes,
                               const LifParams& lif) {
  NetworkSpec spec;
  spec.steps = steps;
  spec.input = input;
  spec.classes = classes;
  std::istringstream in{std::string(layer_list)};
  std::string token;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::Config, "layer token '" + token + "': " + why);
  };
  while (in >> token) {
    double gain = 1.0;
    std::string body = token;
    if (const auto at = token.find('@'); at != std::string::npos) {
      body = token.substr(0, at);
      try {
        std::size_t used = 0;
        gain = std::stod(token.substr(at + 1), &used);
        if (used != token.size() - at - 1 || !(gain > 0.0)) fail("bad init gain");
      } catch (const std::logic_error&) {
        fail("bad init gain");
      }
    }
    std::vector<std::string> parts;
    std::stringstream ss(body);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    std::vector<int> nums;
    bool lif_flag = false;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      if (parts[i] == "lif") {
        lif_flag = true;
        continue;
      }
      try {
        std::size_t used = 0;
        nums.push_back(std::stoi(parts[i], &used));
        if (used != parts[i].size()) fail("bad number");
      } catch (const std::logic_error&) {
        fail("bad number");
      }
    }
    const auto& kind = parts[0];
    LayerSpec l;
    if (kind == "conv") {
      if (nums.empty() || nums.size() > 4) fail("expected conv:OUT[:K[:STRIDE[:PAD]]]");
      const int k = nums.size() > 1 ? nums[1] : 3;
      l = LayerSpec::conv(nums[0], k, nums.size() > 2 ? nums[2] : 1, nums.size() > 3 ? nums[3] : k / 2);
    } else if (kind == "pool") {
      if (nums.size() != 1) fail("expected pool:K");
      l = LayerSpec::pool(nums[0]);
    } else if (kind == "flatten") {
      if (!nums.empty()) fail("flatten takes no arguments");
      l = LayerSpec::flatten();
    } else if (kind == "linear") {
      if (nums.size() > 1) fail("expected linear[:OUT[:lif]]");
      l = LayerSpec::linear(nums.empty() ? classes : nums[0], lif_flag);
    } else {
      fail("unknown layer kind");
    }
    if (gain != 1.0 && kind != "conv" && kind != "linear") fail("only conv and linear layers take an init gain");
    l.lif = lif;
    l.init_gain = gain;
    spec.layers.push_back(l);
  }
  spec.validate();
  return spec;
}

std::string NetworkSpec::describe() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (i) out << ' ';
    switch (l.kind) {
      case LayerKind::Conv2d: out << "conv:" << l.out << ':' << l.kernel << ':' << l.stride << ':' << l.padding; break;
      case LayerKind::AvgPool: out << "pool:" << l.kernel; break;
      case LayerKind::Flatten: out << "flatten"; break;
      case LayerKind::Linear: out << "linear:" << l.out << (l.spiking ? ":lif" : ""); break;
    }
    if (l.init_gain != 1.0) out << '@' << l.init_gain;
  }
  return out.str();
}

NetworkSpec NetworkSpec::desk(int steps, Shape3 input, int classes, const LifParams& lif) {
  return parse("conv:32:3 pool:2 conv:64:3 pool:2 flatten linear", steps, input, classes, lif);
}

bool operator==(const NetworkSpec& a, const NetworkSpec& b) {
  if (a.steps != b.steps || !(a.input == b.input) || a.classes != b.classes ||
      a.surrogate_width != b.surrogate_width || a.layers.size() != b.layers.size())
    return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto &x = a.layers[i], &y = b.layers[i];
    if (x.kind != y.kind || x.out != y.out || x.kernel != y.kernel || x.stride != y.stride ||
        x.padding != y.padding || x.spiking != y.spiking || x.lif.tau != y.lif.tau || x.lif.v_th != y.lif.v_th ||
        x.lif.v_reset != y.lif.v_reset)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Parameters

Params Params::zeros_like() const {
  Params z;
  for (const auto& w : weights) z.weights.push_back(MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : biases) z.biases.push_back(VectorXd::Zero(b.size()));
  return z;
}

Params& Params::operator+=(const Params& other) {
  require(weights.size() == other.weights.size(), "parameter structure mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] += other.weights[i];
    biases[i] += other.biases[i];
  }
  return *this;
}

Params& Params::operator*=(double scale) {
  for (auto& w : weights) w *= scale;
  for (auto& b : biases) b *= scale;
  return *this;
}

Index Params::count() const {
  Index n = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
  return n;
}

bool operator==(const Params& a, const Params& b) {
  if (a.weights.size() != b.weights.size()) return false;
  for (std::size_t i = 0; i < a.weights.size(); ++i) {
    if (a.weights[i].rows() != b.weights[i].rows() || a.weights[i].cols() != b.weights[i].cols() ||
        a.biases[i].size() != b.biases[i].size())
      return false;
    if (a.weights[i] != b.weights[i] || a.biases[i] != b.biases[i]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  index_layers();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    if (l.kind != LayerKind::Conv2d && l.kind != LayerKind::Linear) continue;
    const Shape3 in = shapes_[i];
    const Index fan_in = l.kind == LayerKind::Conv2d ? Index{in.channels} * l.kernel * l.kernel : in.size();
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in)) * l.init_gain * (l.spiking ? spec_.init_gain : 1.0);
    MatrixXd w(l.out, fan_in);
    for (Index c = 0; c < w.cols(); ++c)
      for (Index r = 0; r < w.rows(); ++r) w(r, c) = scale * normal(rng);
    params_.weights.push_back(std::move(w));
    params_.biases.push_back(VectorXd::Zero(l.out));
  }
}

Network::Network(NetworkSpec spec, Params params) : spec_(std::move(spec)), params_(std::move(params)) {
  index_layers();
  Params expected = Network(spec_, 0).params();
  require(params_.weights.size() == expected.weights.size(), "parameter count does not match the network spec");
  for (std::size_t i = 0; i < expected.weights.size(); ++i)
    require(params_.weights[i].rows() == expected.weights[i].rows() &&
                params_.weights[i].cols() == expected.weights[i].cols() &&
                params_.biases[i].size() == expected.biases[i].size(),
            "parameter shapes do not match the network spec");
}

void Network::index_layers() {
  spec_.validate();
  shapes_ = spec_.shapes();
  param_index_.assign(spec_.layers.size(), -1);
  cell_layers_.clear();
  int p = 0;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    if (l.kind == LayerKind::Conv2d || l.kind == LayerKind::Linear) param_index_[i] = p++;
    if (l.spiking) cell_layers_.push_back(static_cast<int>(i));
  }
}

int Network::cell_layer(int cell) const {
  require(cell >= 0 && cell < cell_count(), "LIF cell index out of range");
  return cell_layers_[cell];
}

Shape3 Network::cell_shape(int cell) const { return shapes_[cell_layer(cell) + 1]; }

// ---------------------------------------------------------------------------
// Kernels. Activations are channels x (T * H * W).

namespace {

MatrixXd im2col(const MatrixXd& in, Shape3 s, int steps, const LayerSpec& l, Shape3 o) {
  const int k = l.kernel;
  MatrixXd cols = MatrixXd::Zero(Index{s.channels} * k * k, steps * o.pixels());
  for (int t = 0; t < steps; ++t)
    for (int c = 0; c < s.channels; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const Index row = (Index{c} * k + ky) * k + kx;
          for (int oy = 0; oy < o.height; ++oy) {
            const int y = oy * l.stride - l.padding + ky;
            if (y < 0 || y >= s.height) continue;
            for (int ox = 0; ox < o.width; ++ox) {
              const int x = ox * l.stride - l.padding + kx;
              if (x < 0 || x >= s.width) continue;
              cols(row, t * o.pixels() + Index{oy} * o.width + ox) = in(c, t * s.pixels() + Index{y} * s.width + x);
            }
          }
        }
  return cols;
}

MatrixXd col2im(const MatrixXd& cols, Shape3 s, int steps, const LayerSpec& l, Shape3 o) {
  const int k = l.kernel;
  MatrixXd in = MatrixXd::Zero(s.channels, steps * s.pixels());
  for (int t = 0; t < steps; ++t)
    for (int c = 0; c < s.channels; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const Index row = (Index{c} * k + ky) * k + kx;
          for (int oy = 0; oy < o.height; ++oy) {
            const int y = oy * l.stride - l.padding + ky;
            if (y < 0 || y >= s.height) continue;
            for (int ox = 0; ox < o.width; ++ox) {
              const int x = ox * l.stride - l.padding + kx;
              if (x < 0 || x >= s.width) continue;
              in(c, t * s.pixels() + Index{y} * s.width + x) += cols(row, t * o.pixels() + Index{oy} * o.width + ox);
            }
          }
        }
  return in;
}

MatrixXd avg_pool(const MatrixXd& in, Shape3 s, int steps, int k, Shape3 o) {
  MatrixXd out = MatrixXd::Zero(s.channels, steps * o.pixels());
  const double norm = 1.0 / (k * k);
  for (int t = 0; t < steps; ++t)
    for (int y = 0; y < o.height * k; ++y)
      for (int x = 0; x < o.width * k; ++x)
        out.col(t * o.pixels() + Index{y / k} * o.width + x / k) += in.col(t * s.pixels() + Index{y} * s.width + x);
  return out * norm;
}

MatrixXd avg_pool_backward(const MatrixXd& g, Shape3 s, int steps, int k, Shape3 o) {
  MatrixXd in = MatrixXd::Zero(s.channels, steps * s.pixels());
  const double norm = 1.0 / (k * k);
  for (int t = 0; t < steps; ++t)
    for (int y = 0; y < o.height * k; ++y)
      for (int x = 0; x < o.width * k; ++x)
        in.col(t * s.pixels() + Index{y} * s.width + x) = norm * g.col(t * o.pixels() + Index{y / k} * o.width + x / k);
  return in;
}

MatrixXd flatten_act(const MatrixXd& in, Shape3 s, int steps) {
  MatrixXd out(s.size(), steps);
  const Index p = s.pixels();
  for (int t = 0; t < steps; ++t)
    for (int c = 0; c < s.channels; ++c) out.col(t).segment(c * p, p) = in.row(c).segment(t * p, p).transpose();
  return out;
}

MatrixXd unflatten_act(const MatrixXd& g, Shape3 s, int steps) {
  MatrixXd in(s.channels, steps * s.pixels());
  const Index p = s.pixels();
  for (int t = 0; t < steps; ++t)
    for (int c = 0; c < s.channels; ++c) in.row(c).segment(t * p, p) = g.col(t).segment(c * p, p).transpose();
  return in;
}

ArrayXXd sigmoid(const ArrayXXd& x) { return 1.0 / (1.0 + (-x).exp()); }

void lif_forward(const LifParams& p, int steps, const MatrixXd& x, Shape3 shape, const SimOptions& opts,
                 CellTrace& cell) {
  const Index px = shape.pixels();
  cell.shape = shape;
  cell.h.resize(x.rows(), x.cols());
  cell.s.resize(x.rows(), x.cols());
  cell.v.resize(x.rows(), x.cols());
  ArrayXXd v = ArrayXXd::Constant(x.rows(), px, p.v_reset);
  for (int t = 0; t < steps; ++t) {
    const auto xt = x.middleCols(t * px, px).array();
    const ArrayXXd h = v + p.tau * (xt - (v - p.v_reset));
    const ArrayXXd s = opts.relaxed ? sigmoid(opts.relaxed_slope * (h - p.v_th))
                                    : ArrayXXd((h >= p.v_th).cast<double>());
    v = h * (1.0 - s) + p.v_reset * s;
    cell.h.middleCols(t * px, px) = h.matrix();
    cell.s.middleCols(t * px, px) = s.matrix();
    cell.v.middleCols(t * px, px) = v.matrix();
  }
  cell.dense = densify(cell.s, cell.h, p.v_th);
}

// Reverse pass through one LIF cell. g_spikes and g_dense are dL/dS and
// dL/d(dense) per step (g_dense may be empty); returns dL/dX.
MatrixXd lif_backward(const LifParams& p, int steps, const CellTrace& cell, const MatrixXd& g_spikes,
                      const MatrixXd& g_dense, double surrogate_width, const SimOptions& opts) {
  const Index px = cell.shape.pixels();
  const Index rows = cell.h.rows();
  MatrixXd gx(rows, steps * px);
  ArrayXXd g_v = ArrayXXd::Zero(rows, px);  // dL/dV[t] flowing back from H[t+1]
  const bool has_dense = g_dense.size() > 0;
  for (int t = steps - 1; t >= 0; --t) {
    const ArrayXXd h = cell.h.middleCols(t * px, px).array();
    const ArrayXXd s = cell.s.middleCols(t * px, px).array();
    ArrayXXd ds_dh;
    if (opts.relaxed) {
      ds_dh = opts.relaxed_slope * s * (1.0 - s);
    } else {
      ds_dh = (h - p.v_th).unaryExpr([&](double o) { return surrogate(o, surrogate_width); });
    }
    ArrayXXd g_h = g_spikes.middleCols(t * px, px).array() * ds_dh;
    if (opts.relaxed) {
      g_h += g_v * ((1.0 - s) + (p.v_reset - h) * ds_dh);
    } else {
      g_h += g_v * (1.0 - s);
    }
    if (has_dense) {
      const auto gd = g_dense.middleCols(t * px, px).array();
      if (opts.relaxed) {
        g_h += gd * ((1.0 - s) / p.v_th + ds_dh * (1.0 - h / p.v_th));
      } else {
        g_h += gd * (1.0 - s) / p.v_th;
      }
    }
    gx.middleCols(t * px, px) = (p.tau * g_h).matrix();
    g_v = (1.0 - p.tau) * g_h;
  }
  return gx;
}

}  // namespace

LayerTrace forward(const Network& net, const MatrixXd& input, const SimOptions& opts) {
  const auto& spec = net.spec();
  const int steps = spec.steps;
  if (input.rows() != spec.input.channels || input.cols() != steps * spec.input.pixels())
    throw Error(ErrorKind::Config, "input of shape " + std::to_string(input.rows()) + "x" +
                                       std::to_string(input.cols()) + " does not match the network configuration");
  const auto shapes = spec.shapes();
  LayerTrace trace;
  trace.inputs.resize(spec.layers.size());
  trace.cells.resize(net.cell_count());

  MatrixXd cur = input;
  int cell = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const Shape3 si = shapes[i], so = shapes[i + 1];
    const bool param_layer = l.kind == LayerKind::Conv2d || l.kind == LayerKind::Linear;
    if (opts.full_trace && param_layer) trace.inputs[i] = cur;
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const int p = net.param_index(static_cast<int>(i));
        MatrixXd out = net.params().weights[p] * im2col(cur, si, steps, l, so);
        out.colwise() += net.params().biases[p];
        cur = std::move(out);
        break;
      }
      case LayerKind::Linear: {
        const int p = net.param_index(static_cast<int>(i));
        MatrixXd out = net.params().weights[p] * cur;
        out.colwise() += net.params().biases[p];
        cur = std::move(out);
        break;
      }
      case LayerKind::AvgPool: cur = avg_pool(cur, si, steps, l.kernel, so); break;
      case LayerKind::Flatten: cur = flatten_act(cur, si, steps); break;
    }
    if (l.spiking) {
      CellTrace ct;
      lif_forward(l.lif, steps, cur, so, opts, ct);
      cur = ct.s;
      if (opts.full_trace || cell == net.feature_cell()) {
        trace.cells[cell] = std::move(ct);
      } else {
        trace.cells[cell].shape = so;
      }
      ++cell;
    }
  }
  trace.logits = std::move(cur);
  return trace;
}

GradReport backward(const Network& net, const LayerTrace& trace, const TraceGrad& upstream, const SimOptions& opts) {
  const auto& spec = net.spec();
  const int steps = spec.steps;
  require(trace.cells.size() == static_cast<std::size_t>(net.cell_count()) &&
              trace.inputs.size() == spec.layers.size() && trace.logits.rows() == spec.classes &&
              trace.logits.cols() == steps,
          "backward: trace was not produced by this network");
  const auto shapes = spec.shapes();

  GradReport report;
  report.params = net.params().zeros_like();
  MatrixXd g = upstream.logits.size() ? upstream.logits : MatrixXd::Zero(spec.classes, steps);
  require(g.rows() == spec.classes && g.cols() == steps, "backward: logit gradient has the wrong shape");

  int cell = net.cell_count() - 1;
  for (int i = static_cast<int>(spec.layers.size()) - 1; i >= 0; --i) {
    const auto& l = spec.layers[i];
    const Shape3 si = shapes[i], so = shapes[i + 1];
    if (l.spiking) {
      const auto& ct = trace.cells[cell];
      require(ct.h.size() > 0, "backward needs a full trace");
      if (cell < static_cast<int>(upstream.spikes.size()) && upstream.spikes[cell].size()) g += upstream.spikes[cell];
      const MatrixXd empty;
      const MatrixXd& gd = cell < static_cast<int>(upstream.dense.size()) ? upstream.dense[cell] : empty;
      g = lif_backward(l.lif, steps, ct, g, gd, spec.surrogate_width, opts);
      --cell;
    }
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const int p = net.param_index(i);
        const MatrixXd cols = im2col(trace.inputs[i], si, steps, l, so);
        report.params.weights[p] = g * cols.transpose();
        report.params.biases[p] = g.rowwise().sum();
        g = col2im(net.params().weights[p].transpose() * g, si, steps, l, so);
        break;
      }
      case LayerKind::Linear: {
        const int p = net.param_index(i);
        report.params.weights[p] = g * trace.inputs[i].transpose();
        report.params.biases[p] = g.rowwise().sum();
        g = net.params().weights[p].transpose() * g;
        break;
      }
      case LayerKind::AvgPool: g = avg_pool_backward(g, si, steps, l.kernel, so); break;
      case LayerKind::Flatten: g = unflatten_act(g, si, steps); break;
    }
  }
  report.input = std::move(g);
  return report;
}

VectorXd mean_logits(const LayerTrace& trace) { return trace.logits.rowwise().mean(); }

double time_averaged_cross_entropy(const MatrixXd& logits, int label, MatrixXd* grad) {
  require(label >= 0 && label < logits.rows(), "label " + std::to_string(label) + " out of range");
  const VectorXd z = logits.rowwise().mean();
  const double zmax = z.maxCoeff();
  const VectorXd e = (z.array() - zmax).exp().matrix();
  const double sum = e.sum();
  const double loss = -(z(label) - zmax - std::log(sum));
  if (grad) {
    VectorXd d = e / sum;
    d(label) -= 1.0;
    *grad = (d / static_cast<double>(logits.cols())).replicate(1, logits.cols());
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Training

std::pair<double, Params> cross_entropy_gradient(const Network& net, const Dataset& data,
                                                 const std::vector<std::size_t>& indices) {
  require(!indices.empty(), "empty gradient batch");
  std::vector<double> losses(indices.size());
  std::vector<Params> grads(indices.size());
  parallel_for(indices.size(), [&](std::size_t k) {
    const auto i = indices[k];
    const auto trace = forward(net, data.inputs[i]);
    TraceGrad up;
    losses[k] = time_averaged_cross_entropy(trace.logits, data.labels[i], &up.logits);
    grads[k] = backward(net, trace, up).params;
  });
  Params total = std::move(grads[0]);
  double loss = losses[0];
  for (std::size_t k = 1; k < indices.size(); ++k) {
    total += grads[k];
    loss += losses[k];
  }
  const double n = static_cast<double>(indices.size());
  total *= 1.0 / n;
  return {loss / n, std::move(total)};
}

std::vector<int> predict(const Network& net, const Dataset& data) {
  std::vector<int> out(data.size());
  SimOptions opts;
  opts.full_trace = false;
  parallel_for(data.size(), [&](std::size_t i) {
    const VectorXd z = mean_logits(forward(net, data.inputs[i], opts));
    Index arg = 0;
    for (Index k = 1; k < z.size(); ++k)
      if (z(k) > z(arg)) arg = k;
    out[i] = static_cast<int>(arg);
  });
  return out;
}

double accuracy(const Network& net, const Dataset& data) {
  require(!data.empty(), "accuracy needs a non-empty dataset");
  const auto pred = predict(net, data);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == data.labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

TrainResult train_student(Network net, const Dataset& train, const Dataset& held_out, const TrainOptions& opts) {
  require(!train.empty(), "train_student needs a non-empty dataset");
  require(opts.batch_size >= 1, "batch size must be positive");
  for (int y : train.labels)
    require(y >= 0 && y < net.spec().classes, "training label " + std::to_string(y) + " out of range");

  Optimizer optim(opts.adam ? OptimizerKind::Adam : OptimizerKind::SgdMomentum, opts.lr, opts.momentum);
  TrainResult result{net, 0.0, {}};
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng rng(derive_seed(opts.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      auto [loss, grad] = cross_entropy_gradient(result.net, train, batch);
      auto& params = result.net.params();
      for (std::size_t p = 0; p < params.weights.size(); ++p) {
        optim.step(2 * p, params.weights[p], grad.weights[p]);
        optim.step(2 * p + 1, params.biases[p], grad.biases[p]);
      }
      optim.tick();
      epoch_loss += loss;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
  }
  if (!held_out.empty()) result.accuracy = accuracy(result.net, held_out);
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {
constexpr std::string_view kWeightsMagic = "PACEWTS1";
}

void save_network(const std::string& path, const Network& net) {
  const auto& spec = net.spec();
  Container c;
  c.header["layers"] = spec.describe();
  c.header["T"] = spec.steps;
  c.header["C"] = spec.input.channels;
  c.header["H"] = spec.input.height;
  c.header["W"] = spec.input.width;
  c.header["classes"] = spec.classes;
  c.header["surrogate_width"] = spec.surrogate_width;
  const auto& lif = spec.layers.front().lif;
  c.header["lif"] = {{"tau", lif.tau}, {"v_th", lif.v_th}, {"v_reset", lif.v_reset}};
  auto tensors = nlohmann::json::array();
  auto put = [&](const std::string& name, const double* data, Index rows, Index cols) {
    tensors.push_back({{"name", name}, {"shape", {rows, cols}}, {"offset", c.payload.size()}});
    // Row-major order so the file reads naturally as out x in.
    for (Index r = 0; r < rows; ++r)
      for (Index k = 0; k < cols; ++k) put_f64(c.payload, data[k * rows + r]);
  };
  const auto& p = net.params();
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    put("layer" + std::to_string(i) + ".weight", p.weights[i].data(), p.weights[i].rows(), p.weights[i].cols());
    put("layer" + std::to_string(i) + ".bias", p.biases[i].data(), p.biases[i].size(), 1);
  }
  c.header["tensors"] = tensors;
  write_container(path, kWeightsMagic, c);
}

Network load_network(const std::string& path) {
  const auto c = read_container(path, kWeightsMagic);
  try {
    LifParams lif;
    lif.tau = c.header.at("lif").at("tau");
    lif.v_th = c.header.at("lif").at("v_th");
    lif.v_reset = c.header.at("lif").at("v_reset");
    auto spec = NetworkSpec::parse(c.header.at("layers").get<std::string>(), c.header.at("T"),
                                   Shape3{c.header.at("C"), c.header.at("H"), c.header.at("W")},
                                   c.header.at("classes"), lif);
    spec.surrogate_width = c.header.at("surrogate_width");
    Params params = Network(spec, 0).params();
    const auto& tensors = c.header.at("tensors");
    require(tensors.size() == 2 * params.weights.size(), "weight file tensor count mismatch");
    auto get = [&](const nlohmann::json& t, double* data, Index rows, Index cols) {
      const auto shape = t.at("shape").get<std::vector<Index>>();
      if (shape.size() != 2 || shape[0] != rows || shape[1] != cols)
        throw Error(ErrorKind::Incompatible, "tensor " + t.at("name").get<std::string>() + " has the wrong shape");
      const auto off = t.at("offset").get<std::size_t>();
      if (off > c.payload.size()) throw Error(ErrorKind::Corrupt, "tensor offset beyond payload");
      ByteReader r(std::span(c.payload).subspan(off));
      for (Index rr = 0; rr < rows; ++rr)
        for (Index k = 0; k < cols; ++k) data[k * rows + rr] = r.f64();
    };
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
      get(tensors[2 * i], params.weights[i].data(), params.weights[i].rows(), params.weights[i].cols());
      get(tensors[2 * i + 1], params.biases[i].data(), params.biases[i].size(), 1);
    }
    return Network(std::move(spec), std::move(params));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Corrupt, path + ": " + e.what());
  }
}

}  // namespace pace
