#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sctc/autodiff.hpp"
#include "sctc/geometry.hpp"
#include "sctc/layers.hpp"

namespace sctc {

// A selected triplet proposal as seen by the cross-triplet graph and the
// prediction stage.
struct Proposal {
  std::size_t pair = 0;    // index into the candidate list
  std::size_t human = 0;   // detection index
  std::size_t object = 0;  // detection index
  int object_category = 0;
  Box human_box;
  Box object_box;
  double human_score = 1.0;
  double object_score = 1.0;
  double interactiveness = 1.0;
};

// [K,K,2]: channel 0 same human detection, channel 1 same object detection.
Tensor instance_relation(std::span<const Proposal> proposals);
// [K,K,C_o]: one-hot at c when both objects have category c.
Tensor semantic_relation(std::span<const Proposal> proposals, std::size_t num_objects);
// [K,K,8]: spatial feature between the proposals' union boxes.
Tensor layout_relation(std::span<const Proposal> proposals, double image_w, double image_h);

struct RelationTensors {
  Tensor instance;
  Tensor semantic;
  Tensor layout;
};

RelationTensors build_relations(std::span<const Proposal> proposals, std::size_t num_objects,
                                double image_w, double image_h);

enum class AdjacencyNorm { kSoftmax, kSigmoid, kRaw };
AdjacencyNorm parse_adjacency_norm(const std::string& s);
std::string to_string(AdjacencyNorm n);

// Which relations feed the adjacency. `learned` replaces all of them with a
// learned [K_max, K_max] logit matrix.
struct RelationToggles {
  bool instance = true;
  bool semantic = true;
  bool layout = true;
  bool learned = false;

  bool operator==(const RelationToggles&) const = default;
};

RelationToggles parse_relation_toggles(const std::string& s);  // e.g. "IR,SR,LR" or "LE"
std::string to_string(const RelationToggles& t);

struct CtdDims {
  std::size_t instance_embed = 64;
  std::size_t semantic_embed = 256;
  std::size_t layout_embed = 64;
  std::size_t fusion_hidden = 128;
};

struct CtdParams {
  RelationToggles toggles;
  AdjacencyNorm norm = AdjacencyNorm::kSoftmax;
  Linear embed_instance;
  Linear embed_semantic;
  Linear embed_layout;
  Mlp fusion;
  Parameter* learned_logits = nullptr;  // [K_max, K_max]
};

CtdParams make_ctd_params(ParameterStore& store, RelationToggles toggles, AdjacencyNorm norm,
                          std::size_t num_objects, std::size_t max_proposals, const CtdDims& dims,
                          std::mt19937_64& rng);

// M_adj [K,K]: per-relation linear embeddings along the channel axis,
// concatenated, fused by the MLP to one logit per (j,k), then normalized.
Var fuse_adjacency(Tape& tape, const RelationTensors& relations, const CtdParams& params);

// M_adj * nu_hoi + nu_hoi
Var ctd_update(Var nu_hoi, Var adjacency);

}  // namespace sctc
