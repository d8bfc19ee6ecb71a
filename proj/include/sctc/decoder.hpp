#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "sctc/autodiff.hpp"
#include "sctc/ctd.hpp"
#include "sctc/fixtures.hpp"
#include "sctc/layers.hpp"

namespace sctc {

struct DecoderDims {
  std::size_t model = 64;
  std::size_t heads = 4;
  std::size_t feed_forward = 128;
  std::size_t layers = 6;
};

struct AttentionParams {
  Linear query, key, value, output;
};

struct DecoderLayerParams {
  Parameter* norm1_gain = nullptr;
  Parameter* norm1_shift = nullptr;
  Parameter* norm2_gain = nullptr;
  Parameter* norm2_shift = nullptr;
  Parameter* norm3_gain = nullptr;
  Parameter* norm3_shift = nullptr;
  AttentionParams self_attention;
  AttentionParams cross_attention;
  Linear ff1, ff2;
};

struct DecoderParams {
  std::size_t heads = 4;
  Mlp query_proj;      // 2 d_node -> d_model -> d_model
  Linear memory_proj;  // d_map -> d_model
  std::vector<DecoderLayerParams> layers;
  Parameter* final_gain = nullptr;  // output norm, present when layers > 0
  Parameter* final_shift = nullptr;
  Linear classifier;   // d_model -> C_a
};

DecoderParams make_decoder_params(ParameterStore& store, const DecoderDims& dims,
                                  std::size_t query_dim, std::size_t map_dim,
                                  std::size_t num_actions, std::mt19937_64& rng,
                                  double prior = 0.1);

// Fixed 2-D sinusoidal encoding for an Hf x Wf grid: the first half of the
// channels encode the row, the second half the column. [Hf*Wf, d]
Tensor position_encoding_2d(std::size_t height, std::size_t width, std::size_t dim);

// Attention probabilities per layer/kind/head, recorded when requested.
struct AttentionTrace {
  std::vector<Tensor> weights;
};

// Multi-head scaled dot-product attention; queries [n, d], memory [m, d].
Var multi_head_attention(Tape& tape, Var queries, Var memory, const AttentionParams& params,
                         std::size_t heads, AttentionTrace* trace = nullptr);

// Pre-norm decoder: x += SA(LN x); x += CA(LN x, memory); x += FFN(LN x).
// Queries start as the projection of nu_hoi; the residual stream is normalized
// once more at the end. Output [K', d_model].
Var decode(Tape& tape, Var nu_hoi, const Tensor& feature_map, const DecoderParams& params,
           AttentionTrace* trace = nullptr);

// sigmoid(linear(decoded)) [K', C_a]
Var action_probabilities(Tape& tape, Var decoded, const DecoderParams& params);

// sum_{k,c} FL(y_hat, y) / max(sum y, 1)
Var action_loss(Var probs, const Tensor& labels, double gamma = 2.0, double alpha = 0.25);

// alpha L_kd + beta L_pair + gamma L_a
Var total_loss(Var kd, Var pair, Var action, double alpha, double beta, double gamma);

struct HoiPrediction {
  std::size_t proposal = 0;
  Box human_box;
  Box object_box;
  int object_category = 0;
  int action = 0;
  std::size_t hoi = 0;
  double action_prob = 0;
  double interactiveness = 0;
  double score = 0;
};

// One prediction per (proposal, action) whose HOI exists in the vocabulary,
// scored s_h * s_o * p_hat * y_hat (p_hat dropped when not requested).
std::vector<HoiPrediction> compose_predictions(std::span<const Proposal> proposals,
                                               const Tensor& action_probs,
                                               const HoiVocabulary& vocab,
                                               bool use_interactiveness = true);

}  // namespace sctc
