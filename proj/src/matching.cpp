#include "pace/condense.hpp"

#include <string>

namespace pace {

MatchKind match_kind_from_string(std::string_view s) {
  if (s == "stdsm") return MatchKind::StDsm;
  if (s == "spatial") return MatchKind::Spatial;
  if (s == "cf") return MatchKind::CharFn;
  if (s == "dm") return MatchKind::Dm;
  throw Error(ErrorKind::Value, "unknown matching loss '" + std::string(s) + "' (stdsm | spatial | cf | dm)");
}

const char* to_string(MatchKind kind) noexcept {
  switch (kind) {
    case MatchKind::StDsm: return "stdsm";
    case MatchKind::Spatial: return "spatial";
    case MatchKind::CharFn: return "cf";
    case MatchKind::Dm: return "dm";
  }
  return "?";
}

RealStats real_stats(const FeatureBatch<double>& real, const DirectionSet<double>& dirs, const MatchOptions& opts) {
  RealStats stats;
  if (opts.kind == MatchKind::StDsm || opts.kind == MatchKind::Spatial) {
    stats.spectral.cf = empirical_cf(real, dirs);
    stats.spectral.spectrum =
        opts.kind == MatchKind::StDsm ? temporal_dft(stats.spectral.cf) : stats.spectral.cf;
    stats.spectral.provenance = Provenance::Real;
  } else {
    stats.time_mean = real.time_mean();
  }
  return stats;
}

MatchResult matching_loss(const RealStats& real, const FeatureBatch<double>& syn, const DirectionSet<double>& dirs,
                          const LossWeights& w, const MatchOptions& opts) {
  MatchResult out;
  switch (opts.kind) {
    case MatchKind::StDsm:
    case MatchKind::Spatial: {
      const bool dft = opts.kind == MatchKind::StDsm;
      const auto cf = empirical_cf(syn, dirs);
      const ComplexMatrix<double> spectrum = dft ? temporal_dft(cf) : cf;
      require(spectrum.rows() == real.spectral.spectrum.rows() && spectrum.cols() == real.spectral.spectrum.cols(),
              "real and synthetic spectra differ in shape");
      const auto loss = stdsm_loss(real.spectral.spectrum, spectrum, w, opts.root, true);
      out.value = loss.value;
      out.amplitude = loss.amplitude;
      out.phase = loss.phase;
      const ComplexMatrix<double> grad_cf = dft ? temporal_dft_backward(loss.grad) : loss.grad;
      out.grad = empirical_cf_backward(syn, dirs, grad_cf);
      break;
    }
    case MatchKind::CharFn:
    case MatchKind::Dm: {
      Eigen::MatrixXd grad_mean;
      const Eigen::MatrixXd syn_mean = syn.time_mean();
      out.value = opts.kind == MatchKind::Dm ? dm_loss(real.time_mean, syn_mean, &grad_mean)
                                             : cf_spatial_loss(real.time_mean, syn_mean, dirs, &grad_mean);
      out.grad.resize(syn.data.rows(), syn.data.cols());
      for (int b = 0; b < syn.batch; ++b)
        for (int t = 0; t < syn.steps; ++t) out.grad.row(static_cast<Eigen::Index>(b) * syn.steps + t) =
            grad_mean.row(b) / static_cast<double>(syn.steps);
      break;
    }
  }
  return out;
}

CondenseResult condense_loss(const Network& net, std::span<const LayerTrace> syn, const RealStats& real,
                             std::span<const int> labels, const LossWeights& w, const DirectionSet<double>& dirs,
                             const MatchOptions& opts) {
  require(!syn.empty() && syn.size() == labels.size(), "condense_loss: one label per synthetic trace");
  w.validate();
  const int cell = net.feature_cell();
  CondenseResult out;
  out.grads.resize(syn.size());

  for (std::size_t i = 0; i < syn.size(); ++i) {
    auto& g = out.grads[i];
    const double ce = time_averaged_cross_entropy(syn[i].logits, labels[i], &g.logits);
    out.cross_entropy += ce / static_cast<double>(syn.size());
    g.logits *= w.lambda_inter / static_cast<double>(syn.size());
  }

  if (w.lambda_in != 0.0) {
    const auto features = flatten_features(syn, cell, opts.features);
    const auto match = matching_loss(real, features, dirs, w, opts);
    out.matching = match.value;
    out.amplitude = match.amplitude;
    out.phase = match.phase;
    const Shape3 shape = net.cell_shape(cell);
    for (std::size_t i = 0; i < syn.size(); ++i) {
      auto& g = out.grads[i];
      g.dense.resize(net.cell_count());
      g.spikes.resize(net.cell_count());
      Eigen::MatrixXd gf = w.lambda_in * unflatten_sample(match.grad, static_cast<int>(i), features.steps,
                                                          shape.channels, shape.pixels());
      (opts.features == FeatureKind::Dense ? g.dense : g.spikes)[cell] = std::move(gf);
    }
  }
  out.total = w.lambda_in * out.matching + w.lambda_inter * out.cross_entropy;
  return out;
}

}  // namespace pace
