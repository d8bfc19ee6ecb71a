#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sctc/autodiff.hpp"
#include "sctc/layers.hpp"

namespace sctc {

// What initializes the edge of the per-pair graph.
enum class EdgeContent {
  kInteractionSpatial,  // [F ; spatial] projected
  kInteraction,         // F projected
  kSpatial,             // spatial projected
  kLearnable,           // one learned vector shared by all pairs
};

EdgeContent parse_edge_content(const std::string& s);
std::string to_string(EdgeContent e);

struct StaParams {
  EdgeContent edge_content = EdgeContent::kInteractionSpatial;
  Linear human_proj;  // F_h -> d_node
  Linear object_proj;  // F_o -> d_node
  Linear edge_proj;   // unused for kLearnable
  Parameter* learned_edge = nullptr;  // [d_node], kLearnable only
  Linear f_edge;  // f_i
  Linear f_human;  // f_h
  Linear f_object;  // f_o
  Mlp baseline;   // [nu_h ; nu_o ; edge] -> 2 d_node, used when message passing is off
};

StaParams make_sta_params(ParameterStore& store, EdgeContent edge, std::size_t instance_dim,
                          std::size_t interaction_dim, std::size_t node_dim, bool message_passing,
                          std::mt19937_64& rng);

// Per-pair graph tensors, each [N, d_node] except nu_hoi [N, 2 d_node].
struct TripletGraphState {
  Var nu_h;
  Var nu_o;
  Var edge;
  Var nu_h_hat;
  Var nu_o_hat;
  Var nu_hoi;
};

// nodes and edge only; shared by both fusion variants.
TripletGraphState init_triplet_graph(Tape& tape, Var human_features, Var object_features,
                                     Var interaction, Var spatial, const StaParams& params);

// Message passing with skip connections:
//   m_ho = relu(f_i(e)) * relu(f_h(nu_h)),  nu_o' = m_ho + nu_o
//   m_oh = relu(f_i(e)) * relu(f_o(nu_o)),  nu_h' = m_oh + nu_h
TripletGraphState sta_forward(Tape& tape, Var human_features, Var object_features,
                              Var interaction, Var spatial, const StaParams& params);

// Ablation without the graph: nu_hoi = MLP([nu_h ; nu_o ; edge]).
TripletGraphState mlp_fusion_forward(Tape& tape, Var human_features, Var object_features,
                                     Var interaction, Var spatial, const StaParams& params);

// Two-layer head on nu_hoi: sigmoid(W2 relu(W1 x + b1) + b2), returns [N].
Mlp make_interactiveness_head(ParameterStore& store, std::size_t node_dim, std::mt19937_64& rng,
                              double prior = 0.1);
Var interactiveness(Tape& tape, Var nu_hoi, const Mlp& head);

// Indices of the top-k scores, descending, ties by ascending index. Never
// padded: returns min(k, n) entries.
std::vector<std::size_t> select_topk(std::span<const double> scores, std::size_t k);

// sum_k FL(p_k, y_k) / max(sum_k y_k, 1)
Var pair_loss(Var scores, const Tensor& labels, double gamma = 2.0, double alpha = 0.25);

}  // namespace sctc
