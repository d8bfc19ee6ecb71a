#pragma once

#include <cstddef>
#include <vector>

#include "sctc/autodiff.hpp"

namespace sctc {

struct AdamWConfig {
  double base_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  std::size_t horizon = 10;  // epochs over which the step size anneals to 0
};

// base * 0.5 * (1 + cos(pi * epoch / horizon)); 0 at and beyond the horizon.
double cosine_lr(double base, std::size_t epoch, std::size_t horizon);

// Adam with decoupled weight decay. Moments are keyed by parameter order in
// the store passed to the constructor.
class AdamW {
 public:
  AdamW(ParameterStore& params, AdamWConfig config);

  // Applies one update to every trainable parameter and clears gradients.
  // Throws MissingGradientError if a trainable parameter has no gradient.
  void step(std::size_t epoch);

  std::size_t steps() const { return step_count_; }
  const AdamWConfig& config() const { return config_; }
  const Tensor& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor& second_moment(std::size_t i) const { return v_[i]; }

 private:
  ParameterStore& params_;
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t step_count_ = 0;
};

}  // namespace sctc
