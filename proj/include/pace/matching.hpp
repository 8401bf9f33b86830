#pragma once

#include "pace/densify.hpp"
#include "pace/error.hpp"
#include "pace/rng.hpp"

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace pace {

template <typename Scalar>
using ComplexMatrix = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RealMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// M x D matrix of frequency directions, rows i.i.d. N(0, I_D).
template <typename Scalar>
struct DirectionSet {
  RealMatrix<Scalar> omega;
  std::uint64_t seed = 0;

  Eigen::Index count() const noexcept { return omega.rows(); }
  Eigen::Index dim() const noexcept { return omega.cols(); }
};

template <typename Scalar = double>
DirectionSet<Scalar> sample_directions(Eigen::Index count, Eigen::Index dim, std::uint64_t seed) {
  require(count >= 1 && dim >= 1, "direction set needs M >= 1 and D >= 1");
  DirectionSet<Scalar> dirs;
  dirs.seed = seed;
  dirs.omega.resize(count, dim);
  Rng rng(seed);
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  for (Eigen::Index m = 0; m < count; ++m)
    for (Eigen::Index d = 0; d < dim; ++d) dirs.omega(m, d) = normal(rng);
  return dirs;
}

enum class Provenance { Real, Synthetic };

/// Per-step empirical CFs Z (M x T) and their temporal spectra F (M x T).
template <typename Scalar>
struct SpectralStats {
  ComplexMatrix<Scalar> cf;
  ComplexMatrix<Scalar> spectrum;
  Provenance provenance = Provenance::Real;
};

/// Z(m, t) = (1/B) sum_b exp(i * omega_m . X[b, t, :]).
template <typename Scalar>
ComplexMatrix<Scalar> empirical_cf(const FeatureBatch<Scalar>& features, const DirectionSet<Scalar>& dirs) {
  require(features.batch >= 1, "empirical_cf needs a non-empty batch");
  require(features.dim() == dirs.dim(), "feature dimension does not match the direction set");
  const RealMatrix<Scalar> theta = features.data * dirs.omega.transpose();  // (B*T) x M
  ComplexMatrix<Scalar> z = ComplexMatrix<Scalar>::Zero(dirs.count(), features.steps);
  for (int b = 0; b < features.batch; ++b)
    for (int t = 0; t < features.steps; ++t) {
      const auto row = theta.row(static_cast<Eigen::Index>(b) * features.steps + t);
      for (Eigen::Index m = 0; m < dirs.count(); ++m) z(m, t) += std::polar(Scalar(1), row(m));
    }
  return z / Scalar(features.batch);
}

/// Gradient of a real loss with respect to the features, given
/// grad_cf = dL/dRe(Z) + i dL/dIm(Z).
template <typename Scalar>
RealMatrix<Scalar> empirical_cf_backward(const FeatureBatch<Scalar>& features, const DirectionSet<Scalar>& dirs,
                                         const ComplexMatrix<Scalar>& grad_cf) {
  require(grad_cf.rows() == dirs.count() && grad_cf.cols() == features.steps, "CF gradient shape mismatch");
  const RealMatrix<Scalar> theta = features.data * dirs.omega.transpose();
  RealMatrix<Scalar> grad_theta(theta.rows(), theta.cols());
  const Scalar inv_b = Scalar(1) / Scalar(features.batch);
  for (int b = 0; b < features.batch; ++b)
    for (int t = 0; t < features.steps; ++t) {
      const auto r = static_cast<Eigen::Index>(b) * features.steps + t;
      for (Eigen::Index m = 0; m < dirs.count(); ++m) {
        // d exp(i theta) = i exp(i theta) d theta; dL = Re(conj(G) dZ).
        const auto dz = std::complex<Scalar>(-std::sin(theta(r, m)), std::cos(theta(r, m)));
        grad_theta(r, m) = inv_b * std::real(std::conj(grad_cf(m, t)) * dz);
      }
    }
  return grad_theta * dirs.omega;
}

/// T x T forward-normalized DFT matrix, W(t, nu) = exp(-i 2 pi nu t / T) / T.
template <typename Scalar>
ComplexMatrix<Scalar> dft_matrix(Eigen::Index steps) {
  ComplexMatrix<Scalar> w(steps, steps);
  for (Eigen::Index t = 0; t < steps; ++t)
    for (Eigen::Index nu = 0; nu < steps; ++nu) {
      const auto k = static_cast<Scalar>((t * nu) % steps);
      w(t, nu) = std::polar(Scalar(1) / Scalar(steps), -Scalar(2) * std::numbers::pi_v<Scalar> * k / Scalar(steps));
    }
  return w;
}

/// F(m, nu) = (1/T) sum_t Z(m, t) exp(-i 2 pi nu t / T).
template <typename Derived>
auto temporal_dft(const Eigen::MatrixBase<Derived>& cf) {
  using Scalar = typename Derived::Scalar::value_type;
  require(cf.cols() >= 1, "temporal_dft needs T >= 1");
  return ComplexMatrix<Scalar>(cf * dft_matrix<Scalar>(cf.cols()));
}

/// Adjoint of temporal_dft for gradients: dZ = dF * W^H.
template <typename Derived>
auto temporal_dft_backward(const Eigen::MatrixBase<Derived>& grad_spectrum) {
  using Scalar = typename Derived::Scalar::value_type;
  return ComplexMatrix<Scalar>(grad_spectrum * dft_matrix<Scalar>(grad_spectrum.cols()).adjoint());
}

/// Amplitude/phase weights and objective weights.
struct LossWeights {
  double alpha = 0.5;
  double beta = 0.5;
  double lambda_in = 1.0;
  double lambda_inter = 0.01;

  void validate() const {
    require(alpha >= 0 && alpha <= 1 && beta >= 0 && beta <= 1, "alpha and beta must lie in [0, 1]");
    require(std::isfinite(lambda_in) && std::isfinite(lambda_inter) && lambda_in >= 0 && lambda_inter >= 0,
            "lambda weights must be finite and non-negative");
  }
};

/// Where the 1/2 exponent sits: on every (m, nu) term before averaging, or
/// on the averaged sum.
enum class RootPlacement { PerTerm, Whole };

template <typename Scalar>
struct SpectralLoss {
  Scalar value = 0;
  Scalar amplitude = 0;  // mean of alpha * (A_r - A_s)^2
  Scalar phase = 0;      // mean of 2 beta A_r A_s (1 - cos dPhi)
  ComplexMatrix<Scalar> grad;  // dL/dRe(F_s) + i dL/dIm(F_s), when requested
};

/// Amplitude/phase matching loss between real and synthetic spectra:
/// mean over (m, nu) of sqrt(alpha (A_r - A_s)^2 + 2 beta A_r A_s (1 - cos dPhi)).
template <typename Scalar>
SpectralLoss<Scalar> stdsm_loss(const ComplexMatrix<Scalar>& real, const ComplexMatrix<Scalar>& syn,
                                const LossWeights& w, RootPlacement root = RootPlacement::PerTerm,
                                bool with_grad = false) {
  require(real.rows() == syn.rows() && real.cols() == syn.cols(), "stdsm_loss: spectra shapes differ");
  const auto n = static_cast<Scalar>(real.size());
  const Scalar alpha(w.alpha), beta(w.beta);
  SpectralLoss<Scalar> out;
  RealMatrix<Scalar> terms(real.rows(), real.cols());
  for (Eigen::Index k = 0; k < real.size(); ++k) {
    const auto fr = real(k), fs = syn(k);
    const Scalar ar = std::abs(fr), as = std::abs(fs);
    // A_r A_s cos(dPhi) = Re(F_r conj(F_s)); this form stays defined at A = 0.
    // For Re > 0 the difference A_r A_s - Re is rewritten as Im^2 / (A_r A_s + Re)
    // to avoid cancellation, so identical spectra give exactly 0.
    const Scalar amp = alpha * (ar - as) * (ar - as);
    const auto cross = fr * std::conj(fs);
    const Scalar gap = std::real(cross) > Scalar(0)
                           ? std::imag(cross) * std::imag(cross) / (ar * as + std::real(cross))
                           : ar * as - std::real(cross);
    const Scalar phase = std::max(Scalar(0), Scalar(2) * beta * gap);
    out.amplitude += amp;
    out.phase += phase;
    terms(k) = amp + phase;
  }
  out.amplitude /= n;
  out.phase /= n;
  if (root == RootPlacement::PerTerm) {
    out.value = terms.array().sqrt().sum() / n;
  } else {
    out.value = std::sqrt(terms.sum() / n);
  }
  if (!with_grad) return out;

  out.grad = ComplexMatrix<Scalar>::Zero(real.rows(), real.cols());
  for (Eigen::Index k = 0; k < real.size(); ++k) {
    Scalar dterm;
    if (root == RootPlacement::PerTerm) {
      dterm = terms(k) > Scalar(0) ? Scalar(1) / (Scalar(2) * std::sqrt(terms(k)) * n) : Scalar(0);
    } else {
      dterm = out.value > Scalar(0) ? Scalar(1) / (Scalar(2) * out.value * n) : Scalar(0);
    }
    if (dterm == Scalar(0)) continue;
    const auto fr = real(k), fs = syn(k);
    const Scalar ar = std::abs(fr), as = std::abs(fs);
    const auto unit = as > Scalar(0) ? fs / as : std::complex<Scalar>(0);
    const auto dg = Scalar(2) * alpha * (as - ar) * unit + Scalar(2) * beta * (ar * unit - fr);
    out.grad(k) = dterm * dg;
  }
  return out;
}

/// Squared distance between batch feature means (rows are samples).
template <typename Scalar>
Scalar dm_loss(const RealMatrix<Scalar>& real, const RealMatrix<Scalar>& syn, RealMatrix<Scalar>* grad_syn = nullptr) {
  require(real.rows() >= 1 && syn.rows() >= 1, "dm_loss needs non-empty batches");
  require(real.cols() == syn.cols(), "dm_loss: feature dimensions differ");
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> diff = real.colwise().mean() - syn.colwise().mean();
  if (grad_syn) *grad_syn = (Scalar(-2) / Scalar(syn.rows()) * diff).replicate(syn.rows(), 1);
  return diff.squaredNorm();
}

/// Sum over directions of |phi_syn(omega) - phi_real(omega)|^2 on
/// per-sample feature vectors (rows).
template <typename Scalar>
Scalar cf_spatial_loss(const RealMatrix<Scalar>& real, const RealMatrix<Scalar>& syn, const DirectionSet<Scalar>& dirs,
                       RealMatrix<Scalar>* grad_syn = nullptr) {
  require(real.rows() >= 1 && syn.rows() >= 1, "cf_spatial_loss needs non-empty batches");
  require(real.cols() == syn.cols(), "cf_spatial_loss: feature dimensions differ");
  FeatureBatch<Scalar> r{static_cast<int>(real.rows()), 1, real};
  FeatureBatch<Scalar> s{static_cast<int>(syn.rows()), 1, syn};
  const ComplexMatrix<Scalar> diff = empirical_cf(s, dirs) - empirical_cf(r, dirs);
  if (grad_syn) *grad_syn = empirical_cf_backward(s, dirs, ComplexMatrix<Scalar>(Scalar(2) * diff));
  return diff.squaredNorm();
}

}  // namespace pace
