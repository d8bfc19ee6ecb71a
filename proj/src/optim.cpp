#include "sctc/optim.hpp"

#include <cmath>
#include <numbers>

#include "sctc/error.hpp"

namespace sctc {

double cosine_lr(double base, std::size_t epoch, std::size_t horizon) {
  if (horizon == 0 || epoch >= horizon) return 0.0;
  const double t = static_cast<double>(epoch) / static_cast<double>(horizon);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

AdamW::AdamW(ParameterStore& params, AdamWConfig config) : params_(params), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamW::step(std::size_t epoch) {
  for (const auto& p : params_) {
    if (p->trainable && !p->has_grad) {
      throw MissingGradientError("optimizer step before backward: parameter '" + p->name +
                                 "' has no gradient");
    }
  }
  ++step_count_;
  const double lr = cosine_lr(config_.base_lr, epoch, config_.horizon);
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  std::size_t idx = 0;
  for (auto& p : params_) {
    Tensor& m = m_[idx];
    Tensor& v = v_[idx];
    ++idx;
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p->value[i] -= lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                           config_.weight_decay * p->value[i]);
    }
    p->zero_grad();
  }
}

}  // namespace sctc
