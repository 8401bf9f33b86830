#include "pace/optim.hpp"

#include "pace/error.hpp"

#include <cmath>
#include <string>

namespace pace {

OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "sgd-momentum" || s == "sgd") return OptimizerKind::SgdMomentum;
  if (s == "adaptive" || s == "adam") return OptimizerKind::Adam;
  throw Error(ErrorKind::Value, "unknown optimizer '" + std::string(s) + "' (sgd-momentum | adaptive)");
}

const char* to_string(OptimizerKind kind) noexcept {
  return kind == OptimizerKind::Adam ? "adaptive" : "sgd-momentum";
}

Optimizer::Optimizer(OptimizerKind kind, double lr, double momentum, double beta2, double eps)
    : kind_(kind), lr_(lr), momentum_(momentum), beta2_(beta2), eps_(eps) {
  require(lr >= 0.0, "learning rate must be non-negative");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
}

void Optimizer::update(std::size_t slot, Eigen::Map<Eigen::ArrayXd>& param, const Eigen::ArrayXd& grad) {
  if (m_.size() <= slot) {
    m_.resize(slot + 1);
    v_.resize(slot + 1);
  }
  auto& m = m_[slot];
  if (m.size() != param.size()) m = Eigen::ArrayXd::Zero(param.size());

  if (kind_ == OptimizerKind::SgdMomentum) {
    m = momentum_ * m + grad;
    param -= lr_ * m;
    return;
  }
  auto& v = v_[slot];
  if (v.size() != param.size()) v = Eigen::ArrayXd::Zero(param.size());
  m = momentum_ * m + (1.0 - momentum_) * grad;
  v = beta2_ * v + (1.0 - beta2_) * grad.square();
  const double c1 = 1.0 - std::pow(momentum_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  param -= lr_ * (m / c1) / ((v / c2).sqrt() + eps_);
}

}  // namespace pace
