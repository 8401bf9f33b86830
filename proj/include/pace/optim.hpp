#pragma once

#include <Eigen/Core>

#include <string_view>
#include <vector>

namespace pace {

enum class OptimizerKind { SgdMomentum, Adam };

OptimizerKind optimizer_from_string(std::string_view s);
const char* to_string(OptimizerKind kind) noexcept;

/// First-order optimizer over a fixed list of parameter slots. Each slot is
/// a flat block of doubles; state is allocated on first use.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double momentum = 0.9, double beta2 = 0.999,
            double eps = 1e-8);

  /// Gradient-descent update of `param` in place.
  template <typename Derived, typename GradDerived>
  void step(std::size_t slot, Eigen::DenseBase<Derived>& param, const Eigen::DenseBase<GradDerived>& grad) {
    Eigen::ArrayXd flat_grad = Eigen::Map<const Eigen::ArrayXd>(grad.derived().eval().data(), grad.size());
    Eigen::Map<Eigen::ArrayXd> flat(param.derived().data(), param.size());
    update(slot, flat, flat_grad);
  }

  /// Advance the step counter (Adam bias correction); call once per update round.
  void tick() { ++t_; }

  double lr() const noexcept { return lr_; }
  void set_lr(double lr) noexcept { lr_ = lr; }

 private:
  void update(std::size_t slot, Eigen::Map<Eigen::ArrayXd>& param, const Eigen::ArrayXd& grad);

  OptimizerKind kind_;
  double lr_;
  double momentum_;
  double beta2_;
  double eps_;
  long t_ = 1;
  std::vector<Eigen::ArrayXd> m_;
  std::vector<Eigen::ArrayXd> v_;
};

}  // namespace pace
