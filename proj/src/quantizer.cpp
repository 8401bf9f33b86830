#include "pace/quantizer.hpp"

#include "pace/rng.hpp"

#include <random>

namespace pace {

std::vector<int> SynthSet::class_samples(int label) const {
  std::vector<int> out;
  for (int i = 0; i < samples(); ++i)
    if (labels[i] == label) out.push_back(i);
  return out;
}

void SynthSet::validate() const {
  require(classes >= 1 && ipc >= 1, "synthetic set needs classes >= 1 and ipc >= 1");
  require(steps >= 1 && channels >= 1 && height >= 1 && width >= 1, "synthetic grid dimensions must be positive");
  require(code_size >= 2, "code size N must be at least 2");
  require(mode != GridMode::Bin || code_size == 2, "bin mode requires N = 2");
  require(temperature > 0.0, "PEQ temperature must be positive");
  require(logits.rows() == code_size && logits.cols() == samples() * voxels(), "logit tensor has the wrong shape");
  require(labels.size() == static_cast<std::size_t>(samples()), "one label per synthetic sample");
  std::vector<int> per_class(classes, 0);
  for (int y : labels) {
    require(y >= 0 && y < classes, "synthetic label out of range");
    ++per_class[y];
  }
  for (int n : per_class) require(n == ipc, "every class needs exactly ipc synthetic samples");
}

SynthSet SynthSet::init(int classes, int ipc, int steps, int channels, int height, int width, GridMode mode,
                        int code_size, double temperature, std::uint64_t seed, std::optional<double> zero_bias) {
  SynthSet s;
  s.classes = classes;
  s.ipc = ipc;
  s.steps = steps;
  s.channels = channels;
  s.height = height;
  s.width = width;
  s.mode = mode;
  s.code_size = code_size;
  s.temperature = temperature;
  s.logits.resize(code_size, s.samples() * s.voxels());
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index c = 0; c < s.logits.cols(); ++c)
    for (Eigen::Index n = 0; n < code_size; ++n) s.logits(n, c) = normal(rng);
  s.logits.row(0).array() += zero_bias.value_or(mode == GridMode::Bin ? 1.0 : 0.0);
  for (int i = 0; i < s.samples(); ++i) s.labels.push_back(i / ipc);
  s.validate();
  return s;
}

std::vector<QuantizedSample> quantize_set(const SynthSet& set, std::span<const int> samples, bool relaxed) {
  std::vector<int> all;
  if (samples.empty()) {
    for (int i = 0; i < set.samples(); ++i) all.push_back(i);
    samples = all;
  }
  const Eigen::Index hw = static_cast<Eigen::Index>(set.height) * set.width;
  std::vector<QuantizedSample> out;
  out.reserve(samples.size());
  for (int i : samples) {
    require(i >= 0 && i < set.samples(), "synthetic sample index out of range");
    QuantizedSample qs;
    qs.index = i;
    qs.quant = peq_forward(set.sample_logits(i), set.temperature);
    qs.grid = EventGrid(set.steps, set.channels, set.height, set.width, set.mode);
    qs.input.resize(set.channels, set.steps * hw);
    for (Eigen::Index v = 0; v < set.voxels(); ++v) {
      qs.grid.values[v] = static_cast<std::uint32_t>(qs.quant.hard(v));
      const Eigen::Index t = v / (set.channels * hw);
      const Eigen::Index c = (v / hw) % set.channels;
      qs.input(c, t * hw + v % hw) = relaxed ? qs.quant.soft(v) : static_cast<double>(qs.quant.hard(v));
    }
    out.push_back(std::move(qs));
  }
  return out;
}

Eigen::MatrixXd logit_gradient(const SynthSet& set, const QuantizedSample& sample, const Eigen::MatrixXd& input_grad) {
  const Eigen::Index hw = static_cast<Eigen::Index>(set.height) * set.width;
  require(input_grad.rows() == set.channels && input_grad.cols() == set.steps * hw,
          "input gradient does not match the synthetic grid shape");
  Eigen::RowVectorXd upstream(set.voxels());
  for (Eigen::Index v = 0; v < set.voxels(); ++v) {
    const Eigen::Index t = v / (set.channels * hw);
    const Eigen::Index c = (v / hw) % set.channels;
    upstream(v) = input_grad(c, t * hw + v % hw);
  }
  Eigen::MatrixXd jac = peq_soft_jacobian(sample.quant, set.temperature);
  return jac * upstream.asDiagonal();
}

GridSet to_grid_set(const SynthSet& set) {
  GridSet out;
  out.code_size = set.code_size;
  for (auto& q : quantize_set(set)) out.grids.push_back(std::move(q.grid));
  out.labels = set.labels;
  return out;
}

}  // namespace pace
