#pragma once

#include "pace/condense.hpp"
#include "pace/optim.hpp"
#include "pace/quantizer.hpp"
#include "pace/snn.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pace {

/// Augmentation drawn once per class and iteration and applied identically
/// to the real batch and the synthetic samples of that class.
struct AugmentOptions {
  bool flip = false;            // horizontal mirror with probability 1/2
  bool crop = false;            // random window of bins, moved to t = 0, rest zero
  double crop_fraction = 0.75;  // window length as a fraction of T

  bool any() const noexcept { return flip || crop; }
};

struct AugmentDraw {
  bool flip = false;
  int crop_start = 0;
  int crop_length = 0;  // 0 keeps every bin
};

AugmentDraw draw_augment(const AugmentOptions& opts, int steps, std::uint64_t seed);
/// Both act on network inputs (C x T*H*W); augment_adjoint routes input
/// gradients back through apply_augment.
Eigen::MatrixXd apply_augment(const Eigen::MatrixXd& x, const AugmentDraw& d, int steps, int height, int width);
Eigen::MatrixXd augment_adjoint(const Eigen::MatrixXd& g, const AugmentDraw& d, int steps, int height, int width);

struct DistillConfig {
  int ipc = 1;
  int iterations = 5000;
  double lr = 1.0;
  OptimizerKind optimizer = OptimizerKind::SgdMomentum;
  double momentum = 0.5;
  GridMode mode = GridMode::Bin;
  int code_size = 2;
  int directions = 64;
  double direction_scale = 1.0;  // omega ~ N(0, scale^2 I)
  int real_batch = 64;
  double temperature = 1.0;
  double temperature_end = 1.0;  // linear anneal target; equal to temperature disables it
  LossWeights weights;
  MatchOptions match;
  AugmentOptions augment;  // off by default
  std::optional<double> init_zero_bias;  // code-0 logit offset at init; mode default when empty
  bool init_from_real = false;  // start from randomly drawn real samples instead of noise
  double init_margin = 2.0;     // logit lead of the real sample's code
  bool fixed_directions = false;
  bool relaxed = false;  // smooth spikes and soft quantizer output, for gradient checks
  std::uint64_t seed = 0;

  /// Bin: N = 2, lr = 1.0. Int: N = 8, lr = 1e-2.
  static DistillConfig defaults_for(GridMode mode);
  void validate() const;
};

/// A trained network that distillation only reads.
struct TeacherHandle {
  Network net;
  bool frozen = true;
  double accuracy = 0.0;  // held-out accuracy at freeze time
};

TeacherHandle pretrain_teacher(const NetworkSpec& spec, const Dataset& train, const Dataset& held_out,
                               const TrainOptions& opts);

struct LossRecord {
  int iteration = 0;
  int label = 0;
  double amplitude = 0;
  double phase = 0;
  double matching = 0;
  double cross_entropy = 0;
  double total = 0;
};

struct DistillResult {
  SynthSet set;
  std::vector<LossRecord> history;      // one row per (iteration, class)
  std::vector<double> iteration_loss;   // summed over classes
  double seconds = 0.0;
};

/// Logits that quantize to the given real samples: code v gets `margin`,
/// all others 0. Inputs are network inputs (C x T*H*W).
void seed_from_real(SynthSet& set, const Dataset& real, std::span<const std::size_t> indices, double margin);

/// Optimize synthetic logits against the frozen teacher. Each iteration
/// visits every class: real per-class batch statistics, quantized synthetic
/// samples of that class through the teacher, condensation loss, and
/// gradients through the teacher and the quantizer into the logits.
DistillResult distill_run(const DistillConfig& cfg, const TeacherHandle& teacher, const Dataset& real,
                          const std::function<void(int, double)>& progress = {});

/// One iteration's loss and logit gradient at the current set, without an
/// update. Exposed for gradient checks.
struct IterationGrad {
  double loss = 0;
  Eigen::MatrixXd grad;  // same shape as SynthSet::logits
  std::vector<LossRecord> records;  // per class
};
/// `augment` holds one draw per class, or nothing for no augmentation.
IterationGrad distill_gradient(const DistillConfig& cfg, const TeacherHandle& teacher, const SynthSet& set,
                               const std::vector<RealStats>& stats, const DirectionSet<double>& dirs,
                               std::span<const AugmentDraw> augment = {});

/// Per-class real statistics for one iteration.
std::vector<RealStats> class_stats(const DistillConfig& cfg, const TeacherHandle& teacher, const Dataset& real,
                                   const DirectionSet<double>& dirs, int iteration,
                                   std::span<const AugmentDraw> augment = {});

/// The augmentation draws distill_run uses at `iteration`, one per class.
std::vector<AugmentDraw> iteration_augment(const DistillConfig& cfg, int classes, int steps, int iteration);

/// Stable hash over the fields that fix the logit tensor layout.
std::string config_hash(const SynthSet& set);

void checkpoint(const SynthSet& set, const std::string& path);
/// Throws Corrupt on damaged files and Incompatible when `expected_hash`
/// differs from the stored layout.
SynthSet restore(const std::string& path, const std::optional<std::string>& expected_hash = std::nullopt);

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& history);

}  // namespace pace
