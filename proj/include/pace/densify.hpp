#pragma once

#include "pace/error.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace pace {

struct LayerTrace;

/// Densified spike representation: S + (1 - S) * H / v_th. Equals 1 at spike
/// sites and the threshold-normalized residual potential elsewhere.
template <typename DerivedS, typename DerivedH>
typename DerivedH::PlainObject densify(const Eigen::DenseBase<DerivedS>& spikes,
                                       const Eigen::DenseBase<DerivedH>& potential,
                                       typename DerivedH::Scalar v_th) {
  using Scalar = typename DerivedH::Scalar;
  require(v_th > Scalar(0), "densify requires a positive threshold");
  require(spikes.rows() == potential.rows() && spikes.cols() == potential.cols(),
          "densify: spike and potential shapes differ");
  const auto s = spikes.derived().array();
  typename DerivedH::PlainObject out = potential;
  out.array() = s + (Scalar(1) - s) * potential.derived().array() / v_th;
  return out;
}

/// d(densify)/dH with S detached: (1 - S) / v_th.
template <typename DerivedS>
typename DerivedS::PlainObject densify_grad(const Eigen::DenseBase<DerivedS>& spikes,
                                            typename DerivedS::Scalar v_th) {
  using Scalar = typename DerivedS::Scalar;
  require(v_th > Scalar(0), "densify requires a positive threshold");
  typename DerivedS::PlainObject out = spikes;
  out.array() = (Scalar(1) - spikes.derived().array()) / v_th;
  return out;
}

/// Batch of per-step feature vectors, laid out (B * T) x D with row b * T + t.
template <typename Scalar>
struct FeatureBatch {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  int batch = 0;
  int steps = 0;
  Matrix data;

  Eigen::Index dim() const noexcept { return data.cols(); }
  auto row(int b, int t) { return data.row(static_cast<Eigen::Index>(b) * steps + t); }
  auto row(int b, int t) const { return data.row(static_cast<Eigen::Index>(b) * steps + t); }

  /// B x D matrix of time-averaged features.
  Matrix time_mean() const {
    Matrix out = Matrix::Zero(batch, dim());
    for (int b = 0; b < batch; ++b)
      for (int t = 0; t < steps; ++t) out.row(b) += row(b, t);
    return out / Scalar(steps);
  }
};

enum class FeatureKind { Dense, Spikes };

/// Flatten LIF cell `cell` of each trace into a (B, T, D) batch, D in
/// row-major (C, H, W) order. Spikes selects the raw binary output instead of
/// the densified feature.
FeatureBatch<double> flatten_features(std::span<const LayerTrace> traces, int cell,
                                      FeatureKind kind = FeatureKind::Dense);

/// Inverse layout of flatten_features for one sample: rows b*T..b*T+T-1 of
/// `grad` become a channels x (T * pixels) matrix.
Eigen::MatrixXd unflatten_sample(const Eigen::MatrixXd& grad, int sample, int steps, int channels,
                                 Eigen::Index pixels);

}  // namespace pace
