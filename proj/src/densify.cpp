#include "pace/densify.hpp"

#include "pace/snn.hpp"

namespace pace {

FeatureBatch<double> flatten_features(std::span<const LayerTrace> traces, int cell, FeatureKind kind) {
  require(!traces.empty(), "flatten_features needs at least one trace");
  const auto& first = traces.front();
  require(cell >= 0 && cell < static_cast<int>(first.cells.size()),
          "flatten_features: cell " + std::to_string(cell) + " out of range");
  const Shape3 shape = first.cells[cell].shape;
  const Eigen::Index pixels = shape.pixels();
  const auto& src0 = kind == FeatureKind::Dense ? first.cells[cell].dense : first.cells[cell].s;
  require(src0.size() > 0, "flatten_features: cell " + std::to_string(cell) + " was not recorded");
  const int steps = static_cast<int>(src0.cols() / pixels);

  FeatureBatch<double> out;
  out.batch = static_cast<int>(traces.size());
  out.steps = steps;
  out.data.resize(static_cast<Eigen::Index>(out.batch) * steps, shape.size());
  for (int b = 0; b < out.batch; ++b) {
    const auto& c = traces[b].cells.at(cell);
    const auto& src = kind == FeatureKind::Dense ? c.dense : c.s;
    require(src.rows() == shape.channels && src.cols() == steps * pixels,
            "flatten_features: inconsistent trace shapes in batch");
    for (int t = 0; t < steps; ++t) {
      auto row = out.row(b, t);
      for (int ch = 0; ch < shape.channels; ++ch)
        row.segment(ch * pixels, pixels) = src.row(ch).segment(t * pixels, pixels);
    }
  }
  return out;
}

Eigen::MatrixXd unflatten_sample(const Eigen::MatrixXd& grad, int sample, int steps, int channels,
                                 Eigen::Index pixels) {
  Eigen::MatrixXd out(channels, steps * pixels);
  for (int t = 0; t < steps; ++t) {
    const auto row = grad.row(static_cast<Eigen::Index>(sample) * steps + t);
    for (int ch = 0; ch < channels; ++ch)
      out.row(ch).segment(t * pixels, pixels) = row.segment(ch * pixels, pixels);
  }
  return out;
}

}  // namespace pace
