#include "sctc/sta.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sctc/error.hpp"
#include "sctc/geometry.hpp"

namespace sctc {

EdgeContent parse_edge_content(const std::string& s) {
  if (s == "IF+SF" || s == "if_sf") return EdgeContent::kInteractionSpatial;
  if (s == "IF" || s == "if") return EdgeContent::kInteraction;
  if (s == "SF" || s == "sf") return EdgeContent::kSpatial;
  if (s == "LE" || s == "le") return EdgeContent::kLearnable;
  throw ConfigError("unknown edge content '" + s + "' (expected IF+SF, IF, SF or LE)");
}

std::string to_string(EdgeContent e) {
  switch (e) {
    case EdgeContent::kInteractionSpatial: return "IF+SF";
    case EdgeContent::kInteraction: return "IF";
    case EdgeContent::kSpatial: return "SF";
    case EdgeContent::kLearnable: return "LE";
  }
  return "?";
}

StaParams make_sta_params(ParameterStore& store, EdgeContent edge, std::size_t instance_dim,
                          std::size_t interaction_dim, std::size_t node_dim, bool message_passing,
                          std::mt19937_64& rng) {
  StaParams p;
  p.edge_content = edge;
  p.human_proj = Linear::create(store, "sta.human_proj", instance_dim, node_dim, rng);
  p.object_proj = Linear::create(store, "sta.object_proj", instance_dim, node_dim, rng);
  switch (edge) {
    case EdgeContent::kInteractionSpatial:
      p.edge_proj = Linear::create(store, "sta.edge_proj", interaction_dim + SpatialFeature::kDim,
                                   node_dim, rng);
      break;
    case EdgeContent::kInteraction:
      p.edge_proj = Linear::create(store, "sta.edge_proj", interaction_dim, node_dim, rng);
      break;
    case EdgeContent::kSpatial:
      p.edge_proj = Linear::create(store, "sta.edge_proj", SpatialFeature::kDim, node_dim, rng);
      break;
    case EdgeContent::kLearnable:
      p.learned_edge = &store.add("sta.learned_edge", {node_dim}, Init::kNormal, rng, 0.5);
      break;
  }
  if (message_passing) {
    p.f_edge = Linear::create(store, "sta.f_edge", node_dim, node_dim, rng);
    p.f_human = Linear::create(store, "sta.f_human", node_dim, node_dim, rng);
    p.f_object = Linear::create(store, "sta.f_object", node_dim, node_dim, rng);
  } else {
    p.baseline = Mlp::create(store, "sta.mlp_fusion", {3 * node_dim, 2 * node_dim, 2 * node_dim}, rng);
  }
  return p;
}

TripletGraphState init_triplet_graph(Tape& tape, Var human_features, Var object_features,
                                     Var interaction, Var spatial, const StaParams& params) {
  TripletGraphState s;
  s.nu_h = linear(tape, human_features, params.human_proj);
  s.nu_o = linear(tape, object_features, params.object_proj);
  switch (params.edge_content) {
    case EdgeContent::kInteractionSpatial:
      s.edge = linear(tape, concat({interaction, spatial}), params.edge_proj);
      break;
    case EdgeContent::kInteraction:
      s.edge = linear(tape, interaction, params.edge_proj);
      break;
    case EdgeContent::kSpatial:
      s.edge = linear(tape, spatial, params.edge_proj);
      break;
    case EdgeContent::kLearnable: {
      const std::size_t n = human_features.shape()[0];
      // Broadcast the shared vector to every pair: zeros[N, d] + edge.
      s.edge = add_bias(tape.constant(Tensor({n, params.learned_edge->value.size()})),
                        tape.param(*params.learned_edge));
      break;
    }
  }
  return s;
}

TripletGraphState sta_forward(Tape& tape, Var human_features, Var object_features,
                              Var interaction, Var spatial, const StaParams& params) {
  if (!params.f_edge.weight) throw ConfigError("sta_forward: message-passing parameters missing");
  TripletGraphState s =
      init_triplet_graph(tape, human_features, object_features, interaction, spatial, params);
  const Var gate = relu(linear(tape, s.edge, params.f_edge));
  const Var h_to_o = hadamard(gate, relu(linear(tape, s.nu_h, params.f_human)));
  const Var o_to_h = hadamard(gate, relu(linear(tape, s.nu_o, params.f_object)));
  s.nu_o_hat = add(h_to_o, s.nu_o);
  s.nu_h_hat = add(o_to_h, s.nu_h);
  s.nu_hoi = concat({s.nu_h_hat, s.nu_o_hat});
  return s;
}

TripletGraphState mlp_fusion_forward(Tape& tape, Var human_features, Var object_features,
                                     Var interaction, Var spatial, const StaParams& params) {
  if (params.baseline.layers.empty()) throw ConfigError("mlp_fusion_forward: MLP missing");
  TripletGraphState s =
      init_triplet_graph(tape, human_features, object_features, interaction, spatial, params);
  s.nu_h_hat = s.nu_h;
  s.nu_o_hat = s.nu_o;
  s.nu_hoi = mlp(tape, concat({s.nu_h, s.nu_o, s.edge}), params.baseline);
  return s;
}

Mlp make_interactiveness_head(ParameterStore& store, std::size_t node_dim, std::mt19937_64& rng,
                              double prior) {
  Mlp head = Mlp::create(store, "sta.interactiveness", {2 * node_dim, node_dim, 1}, rng);
  // Same convention as the action classifier: untrained output is the prior.
  for (auto& w : head.layers.back().weight->value.data()) w = 0.0;
  head.layers.back().bias->value[0] = -std::log((1.0 - prior) / prior);
  return head;
}

Var interactiveness(Tape& tape, Var nu_hoi, const Mlp& head) {
  const Var logits = mlp(tape, nu_hoi, head);
  return reshape(sigmoid(logits), {logits.shape()[0]});
}

std::vector<std::size_t> select_topk(std::span<const double> scores, std::size_t k) {
  if (k == 0) throw ConfigError("select_topk: K must be at least 1");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

Var pair_loss(Var scores, const Tensor& labels, double gamma, double alpha) {
  double positives = 0.0;
  for (double y : labels.data()) positives += y;
  return scale(sum(focal_loss(scores, labels, gamma, alpha)), 1.0 / std::max(positives, 1.0));
}

}  // namespace sctc
