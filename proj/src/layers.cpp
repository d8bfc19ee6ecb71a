#include "sctc/layers.hpp"

#include <algorithm>
#include <cmath>

#include "sctc/error.hpp"

namespace sctc {

Linear Linear::create(ParameterStore& store, const std::string& name, std::size_t in,
                      std::size_t out, std::mt19937_64& rng) {
  Linear l;
  l.weight = &store.add(name + ".weight", {in, out}, Init::kXavier, rng);
  l.bias = &store.add(name + ".bias", {out}, Init::kZeros, rng);
  return l;
}

Var linear(Var x, Var weight, Var bias) {
  if (weight.value().rank() != 2) throw DimensionError("linear: weight must be 2-D");
  const std::size_t in = weight.shape()[0], out = weight.shape()[1];
  if (x.value().rank() == 0 || x.cols() != in) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(weight.shape()));
  }
  if (bias.value().size() != out) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " vs weight " +
                         shape_str(weight.shape()));
  }
  const Shape in_shape = x.shape();
  Var flat = in_shape.size() == 2 ? x : reshape(x, {x.rows(), in});
  Var y = add_bias(matmul(flat, weight), bias);
  if (in_shape.size() == 2) return y;
  Shape out_shape = in_shape;
  out_shape.back() = out;
  return reshape(y, out_shape);
}

Var linear(Tape& tape, Var x, const Linear& layer) {
  return linear(x, tape.param(*layer.weight), tape.param(*layer.bias));
}

Mlp Mlp::create(ParameterStore& store, const std::string& name,
                const std::vector<std::size_t>& widths, std::mt19937_64& rng) {
  if (widths.size() < 2) throw ConfigError("mlp '" + name + "' needs at least one layer");
  Mlp m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    m.layers.push_back(
        Linear::create(store, name + "." + std::to_string(i), widths[i], widths[i + 1], rng));
  }
  return m;
}

Var mlp(Tape& tape, Var x, const Mlp& net, bool final_activation) {
  if (net.layers.empty()) throw ConfigError("mlp: empty layer list");
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    x = linear(tape, x, net.layers[i]);
    if (i + 1 < net.layers.size() || final_activation) x = relu(x);
  }
  return x;
}

double focal_loss_scalar(double p, double y, double gamma, double alpha) {
  p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  const double pos = -alpha * std::pow(1.0 - p, gamma) * std::log(p);
  const double neg = -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
  return y * pos + (1.0 - y) * neg;
}

Var focal_loss(Var probs, const Tensor& labels, double gamma, double alpha) {
  if (probs.shape() != labels.shape()) {
    throw DimensionError("focal_loss: probabilities " + shape_str(probs.shape()) + " vs labels " +
                         shape_str(labels.shape()));
  }
  const Tensor& pv = probs.value();
  Tensor out(pv.shape());
  Tensor dp(pv.shape());
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double raw = pv[i];
    const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    const double y = labels[i];
    out[i] = focal_loss_scalar(p, y, gamma, alpha);
    if (raw != p) continue;  // clamp active
    const double q = 1.0 - p;
    const double d_pos =
        -alpha * ((gamma == 0.0 ? 0.0 : -gamma * std::pow(q, gamma - 1.0) * std::log(p)) +
                  std::pow(q, gamma) / p);
    const double d_neg =
        -(1.0 - alpha) * ((gamma == 0.0 ? 0.0 : gamma * std::pow(p, gamma - 1.0) * std::log(q)) -
                          std::pow(p, gamma) / q);
    dp[i] = y * d_pos + (1.0 - y) * d_neg;
  }
  return probs.tape->record(std::move(out), {probs},
                            [probs, dp = std::move(dp)](Tape& t, const Tensor& g) {
                              Tensor& gp = t.grad(probs);
                              for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i] * dp[i];
                            });
}

}  // namespace sctc
