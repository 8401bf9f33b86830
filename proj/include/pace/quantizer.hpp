#pragma once

#include "pace/error.hpp"
#include "pace/event_io.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace pace {

/// PEQ-N output for S sites with an N-way code each. Logits and
/// probabilities are N x S (one column per site).
template <typename Scalar>
struct QuantOut {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> prob;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> soft;  // sum_n n * p_n
  Eigen::Array<int, 1, Eigen::Dynamic> hard;      // argmax p, ties to the lowest code

  /// Straight-through value: numerically the hard code, differentiated as soft.
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> ste() const { return hard.template cast<Scalar>().matrix(); }
};

/// p = softmax(z / tau) per column, soft expectation and hard argmax.
template <typename Derived>
QuantOut<typename Derived::Scalar> peq_forward(const Eigen::MatrixBase<Derived>& logits,
                                               typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  require(tau > Scalar(0), "PEQ temperature must be positive");
  require(logits.rows() >= 2, "PEQ code size must be at least 2");
  const Eigen::Index n = logits.rows();
  QuantOut<Scalar> out;
  out.prob.resize(n, logits.cols());
  out.soft.resize(logits.cols());
  out.hard.resize(logits.cols());
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> codes =
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::LinSpaced(n, Scalar(0), Scalar(n - 1));
  for (Eigen::Index s = 0; s < logits.cols(); ++s) {
    const auto z = logits.col(s);
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k < n; ++k)
      if (z(k) > z(arg)) arg = k;
    auto p = out.prob.col(s);
    p = ((z.array() - z(arg)) / tau).exp().matrix();
    p /= p.sum();
    out.soft(s) = p.dot(codes);
    out.hard(s) = static_cast<int>(arg);
  }
  return out;
}

/// dy_soft/dz_j = (1/tau) p_j (j - y_soft) for every code j and site (N x S).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> peq_soft_jacobian(const QuantOut<Scalar>& q, Scalar tau) {
  const Eigen::Index n = q.prob.rows();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> jac(n, q.prob.cols());
  for (Eigen::Index j = 0; j < n; ++j)
    jac.row(j) = (q.prob.row(j).array() * (Scalar(j) - q.soft.array())).matrix() / tau;
  return jac;
}

/// Gradient at the logits given the upstream gradient at y (one value per
/// site). Only the soft path carries gradient.
template <typename Derived, typename UpDerived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> peq_backward(
    const Eigen::MatrixBase<Derived>& logits, typename Derived::Scalar tau, const Eigen::MatrixBase<UpDerived>& upstream) {
  require(upstream.size() == logits.cols(), "PEQ upstream gradient needs one value per site");
  const auto q = peq_forward(logits, tau);
  auto jac = peq_soft_jacobian(q, tau);
  for (Eigen::Index s = 0; s < jac.cols(); ++s) jac.col(s) *= upstream(s);
  return jac;
}

/// Learnable synthetic event set: N logits per voxel of each sample.
/// Logits are N x (samples * T * C * H * W), sample-major, voxel order
/// ((t * C + c) * H + y) * W + x.
struct SynthSet {
  int classes = 0;
  int ipc = 0;
  int steps = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  int code_size = 2;
  GridMode mode = GridMode::Bin;
  double temperature = 1.0;
  Eigen::MatrixXd logits;
  std::vector<int> labels;

  int samples() const noexcept { return classes * ipc; }
  Eigen::Index voxels() const noexcept {
    return static_cast<Eigen::Index>(steps) * channels * height * width;
  }
  auto sample_logits(int i) { return logits.middleCols(i * voxels(), voxels()); }
  auto sample_logits(int i) const { return logits.middleCols(i * voxels(), voxels()); }
  /// Samples carrying `label`, in index order.
  std::vector<int> class_samples(int label) const;

  void validate() const;

  /// N(0, 1) logits from `seed`, plus `zero_bias` on code 0 so the initial
  /// grids are sparse (default +1 in Bin mode, 0 in Int mode). Labels are
  /// class-major: sample i has label i / ipc.
  static SynthSet init(int classes, int ipc, int steps, int channels, int height, int width, GridMode mode,
                       int code_size, double temperature, std::uint64_t seed,
                       std::optional<double> zero_bias = std::nullopt);
};

/// One quantized synthetic sample with what its gradient hook needs.
struct QuantizedSample {
  int index = 0;
  EventGrid grid;         // hard codes
  Eigen::MatrixXd input;  // network input (hard, or soft when relaxed)
  QuantOut<double> quant;
};

/// Quantize the given samples (all when empty). Relaxed mode feeds y_soft
/// to the network instead of y_hard so the whole path is differentiable.
std::vector<QuantizedSample> quantize_set(const SynthSet& set, std::span<const int> samples = {},
                                          bool relaxed = false);

/// Route dL/d(network input) of one quantized sample back to its logits
/// (N x voxels) through the straight-through estimator.
Eigen::MatrixXd logit_gradient(const SynthSet& set, const QuantizedSample& sample, const Eigen::MatrixXd& input_grad);

/// Hard grids and labels of the whole set.
GridSet to_grid_set(const SynthSet& set);

}  // namespace pace
