#include "sctc/decoder.hpp"

#include <cmath>
#include <string>

#include "sctc/error.hpp"

namespace sctc {

namespace {

AttentionParams make_attention(ParameterStore& store, const std::string& name, std::size_t d,
                               std::mt19937_64& rng) {
  return {Linear::create(store, name + ".query", d, d, rng),
          Linear::create(store, name + ".key", d, d, rng),
          Linear::create(store, name + ".value", d, d, rng),
          Linear::create(store, name + ".output", d, d, rng)};
}

Parameter* ones(ParameterStore& store, const std::string& name, std::size_t d,
                std::mt19937_64& rng) {
  Parameter& p = store.add(name, {d}, Init::kZeros, rng);
  for (auto& v : p.value.data()) v = 1.0;
  return &p;
}

Var norm(Tape& tape, Var x, Parameter* gain, Parameter* shift) {
  return layer_norm(x, tape.param(*gain), tape.param(*shift));
}

}  // namespace

DecoderParams make_decoder_params(ParameterStore& store, const DecoderDims& dims,
                                  std::size_t query_dim, std::size_t map_dim,
                                  std::size_t num_actions, std::mt19937_64& rng, double prior) {
  if (dims.heads == 0 || dims.model % dims.heads != 0) {
    throw ConfigError("decoder width " + std::to_string(dims.model) +
                      " is not divisible by head count " + std::to_string(dims.heads));
  }
  DecoderParams p;
  p.heads = dims.heads;
  const std::size_t d = dims.model;
  p.query_proj = Mlp::create(store, "decoder.query_proj", {query_dim, d, d}, rng);
  p.memory_proj = Linear::create(store, "decoder.memory_proj", map_dim, d, rng);
  for (std::size_t l = 0; l < dims.layers; ++l) {
    const std::string n = "decoder.layer" + std::to_string(l);
    DecoderLayerParams layer;
    layer.norm1_gain = ones(store, n + ".norm1.gain", d, rng);
    layer.norm1_shift = &store.add(n + ".norm1.shift", {d}, Init::kZeros, rng);
    layer.self_attention = make_attention(store, n + ".self_attention", d, rng);
    layer.norm2_gain = ones(store, n + ".norm2.gain", d, rng);
    layer.norm2_shift = &store.add(n + ".norm2.shift", {d}, Init::kZeros, rng);
    layer.cross_attention = make_attention(store, n + ".cross_attention", d, rng);
    layer.norm3_gain = ones(store, n + ".norm3.gain", d, rng);
    layer.norm3_shift = &store.add(n + ".norm3.shift", {d}, Init::kZeros, rng);
    layer.ff1 = Linear::create(store, n + ".ff1", d, dims.feed_forward, rng);
    layer.ff2 = Linear::create(store, n + ".ff2", dims.feed_forward, d, rng);
    p.layers.push_back(layer);
  }
  if (dims.layers > 0) {
    p.final_gain = ones(store, "decoder.final_norm.gain", d, rng);
    p.final_shift = &store.add("decoder.final_norm.shift", {d}, Init::kZeros, rng);
  }
  p.classifier = Linear::create(store, "decoder.classifier", d, num_actions, rng);
  // Zero weights and a prior bias: before training every action gets the
  // prior, so an untrained model ranks triplets by detection score alone.
  for (auto& w : p.classifier.weight->value.data()) w = 0.0;
  for (auto& b : p.classifier.bias->value.data()) b = -std::log((1.0 - prior) / prior);
  return p;
}

Tensor position_encoding_2d(std::size_t height, std::size_t width, std::size_t dim) {
  if (dim % 4 != 0) throw ConfigError("2-D position encoding needs a width divisible by 4");
  const std::size_t half = dim / 2;
  Tensor pe({height * width, dim});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double* row = &pe.data()[(y * width + x) * dim];
      for (std::size_t i = 0; i < half / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(half));
        row[2 * i] = std::sin(static_cast<double>(y) * freq);
        row[2 * i + 1] = std::cos(static_cast<double>(y) * freq);
        row[half + 2 * i] = std::sin(static_cast<double>(x) * freq);
        row[half + 2 * i + 1] = std::cos(static_cast<double>(x) * freq);
      }
    }
  }
  return pe;
}

Var multi_head_attention(Tape& tape, Var queries, Var memory, const AttentionParams& params,
                         std::size_t heads, AttentionTrace* trace) {
  const Var q = linear(tape, queries, params.query);
  const Var k = linear(tape, memory, params.key);
  const Var v = linear(tape, memory, params.value);
  const std::size_t d = q.cols();
  const std::size_t dh = d / heads;
  const std::size_t n = q.rows(), m = k.rows();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outputs;
  for (std::size_t h = 0; h < heads; ++h) {
    const Var qh = slice(q, 0, n, h * dh, dh);
    const Var kh = slice(k, 0, m, h * dh, dh);
    const Var vh = slice(v, 0, m, h * dh, dh);
    const Var weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt));
    if (trace) trace->weights.push_back(weights.value());
    outputs.push_back(matmul(weights, vh));
  }
  return linear(tape, concat(outputs), params.output);
}

Var decode(Tape& tape, Var nu_hoi, const Tensor& feature_map, const DecoderParams& params,
           AttentionTrace* trace) {
  if (feature_map.rank() != 3) throw DimensionError("decode: feature map must be [Hf,Wf,d]");
  const std::size_t hf = feature_map.extent(0), wf = feature_map.extent(1);
  Var x = mlp(tape, nu_hoi, params.query_proj);
  if (params.layers.empty()) return x;
  const Tensor flat = feature_map.reshaped({hf * wf, feature_map.extent(2)});
  const std::size_t d = x.cols();
  const Var memory = add(linear(tape, tape.constant(flat), params.memory_proj),
                         tape.constant(position_encoding_2d(hf, wf, d)));
  for (const auto& layer : params.layers) {
    Var h = norm(tape, x, layer.norm1_gain, layer.norm1_shift);
    x = add(x, multi_head_attention(tape, h, h, layer.self_attention, params.heads, trace));
    h = norm(tape, x, layer.norm2_gain, layer.norm2_shift);
    x = add(x, multi_head_attention(tape, h, memory, layer.cross_attention, params.heads, trace));
    h = norm(tape, x, layer.norm3_gain, layer.norm3_shift);
    x = add(x, linear(tape, relu(linear(tape, h, layer.ff1)), layer.ff2));
  }
  return norm(tape, x, params.final_gain, params.final_shift);
}

Var action_probabilities(Tape& tape, Var decoded, const DecoderParams& params) {
  return sigmoid(linear(tape, decoded, params.classifier));
}

Var action_loss(Var probs, const Tensor& labels, double gamma, double alpha) {
  double positives = 0.0;
  for (double y : labels.data()) positives += y;
  return scale(sum(focal_loss(probs, labels, gamma, alpha)), 1.0 / std::max(positives, 1.0));
}

Var total_loss(Var kd, Var pair, Var action, double alpha, double beta, double gamma) {
  return add(add(scale(kd, alpha), scale(pair, beta)), scale(action, gamma));
}

std::vector<HoiPrediction> compose_predictions(std::span<const Proposal> proposals,
                                               const Tensor& action_probs,
                                               const HoiVocabulary& vocab,
                                               bool use_interactiveness) {
  if (action_probs.rank() != 2 || action_probs.extent(0) != proposals.size() ||
      action_probs.extent(1) != static_cast<std::size_t>(vocab.num_actions)) {
    throw DimensionError("compose_predictions: action probabilities " +
                         shape_str(action_probs.shape()) + " for " +
                         std::to_string(proposals.size()) + " proposals");
  }
  std::vector<HoiPrediction> out;
  const std::size_t ca = action_probs.extent(1);
  for (std::size_t k = 0; k < proposals.size(); ++k) {
    const Proposal& p = proposals[k];
    for (int a : vocab.actions_for_object(p.object_category)) {
      HoiPrediction pred;
      pred.proposal = k;
      pred.human_box = p.human_box;
      pred.object_box = p.object_box;
      pred.object_category = p.object_category;
      pred.action = a;
      pred.hoi = *vocab.hoi_index(a, p.object_category);
      pred.action_prob = action_probs[k * ca + static_cast<std::size_t>(a)];
      pred.interactiveness = p.interactiveness;
      pred.score = p.human_score * p.object_score * pred.action_prob *
                   (use_interactiveness ? p.interactiveness : 1.0);
      out.push_back(pred);
    }
  }
  return out;
}

}  // namespace sctc
