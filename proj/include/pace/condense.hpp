#pragma once

#include "pace/densify.hpp"
#include "pace/matching.hpp"
#include "pace/snn.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace pace {

/// Feature-matching term of the condensation objective.
///   StDsm   - per-step CFs, temporal DFT, amplitude/phase loss
///   Spatial - per-step CFs matched with the same loss but no temporal DFT
///   CharFn  - CF distance on time-averaged features
///   Dm      - squared distance of time-averaged feature means
enum class MatchKind { StDsm, Spatial, CharFn, Dm };

MatchKind match_kind_from_string(std::string_view s);
const char* to_string(MatchKind kind) noexcept;

struct MatchOptions {
  MatchKind kind = MatchKind::StDsm;
  FeatureKind features = FeatureKind::Dense;
  RootPlacement root = RootPlacement::PerTerm;
};

/// Statistics of one real per-class batch, computed once per iteration.
struct RealStats {
  SpectralStats<double> spectral;  // StDsm / Spatial
  Eigen::MatrixXd time_mean;       // CharFn / Dm, B x D
};

RealStats real_stats(const FeatureBatch<double>& real, const DirectionSet<double>& dirs, const MatchOptions& opts);

struct MatchResult {
  double value = 0;
  double amplitude = 0;
  double phase = 0;
  Eigen::MatrixXd grad;  // dL/d(features), (B*T) x D
};

MatchResult matching_loss(const RealStats& real, const FeatureBatch<double>& syn, const DirectionSet<double>& dirs,
                          const LossWeights& w, const MatchOptions& opts);

struct CondenseResult {
  double total = 0;
  double matching = 0;
  double amplitude = 0;
  double phase = 0;
  double cross_entropy = 0;  // mean over the synthetic batch
  std::vector<TraceGrad> grads;  // one per synthetic trace
};

/// lambda_in * matching + lambda_inter * CE(mean_t z_t, y) for a single-class
/// synthetic batch, with per-trace upstream gradients for backward().
CondenseResult condense_loss(const Network& net, std::span<const LayerTrace> syn, const RealStats& real,
                             std::span<const int> labels, const LossWeights& w, const DirectionSet<double>& dirs,
                             const MatchOptions& opts);

}  // namespace pace
