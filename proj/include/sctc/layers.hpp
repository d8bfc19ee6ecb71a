#pragma once

#include <random>
#include <string>
#include <vector>

#include "sctc/autodiff.hpp"

namespace sctc {

// Affine map y = xW + b with W[in,out], b[out].
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Linear create(ParameterStore& store, const std::string& name, std::size_t in,
                       std::size_t out, std::mt19937_64& rng);
  std::size_t in_features() const { return weight->value.extent(0); }
  std::size_t out_features() const { return weight->value.extent(1); }
};

// Applies to x[*, in]; a rank-1 x is treated as a single row and the result
// keeps rank 1.
Var linear(Var x, Var weight, Var bias);
Var linear(Tape& tape, Var x, const Linear& layer);

struct Mlp {
  std::vector<Linear> layers;

  // widths = {in, hidden..., out}
  static Mlp create(ParameterStore& store, const std::string& name,
                    const std::vector<std::size_t>& widths, std::mt19937_64& rng);
};

// Linear layers with relu between them. The final layer is left linear
// unless `final_activation` is set.
Var mlp(Tape& tape, Var x, const Mlp& net, bool final_activation = false);

// Elementwise focal loss, unreduced:
//   y=1: -alpha (1-p)^gamma log p
//   y=0: -(1-alpha) p^gamma log(1-p)
// p is clamped to [kProbClamp, 1-kProbClamp]; no gradient flows through an
// active clamp.
inline constexpr double kProbClamp = 1e-7;
Var focal_loss(Var probs, const Tensor& labels, double gamma = 2.0, double alpha = 0.25);

// Scalar reference of the same formula.
double focal_loss_scalar(double p, double y, double gamma, double alpha);

}  // namespace sctc
