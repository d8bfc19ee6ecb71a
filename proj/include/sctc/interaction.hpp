#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "sctc/autodiff.hpp"
#include "sctc/fixtures.hpp"
#include "sctc/geometry.hpp"
#include "sctc/layers.hpp"

namespace sctc {

// Candidate human-object pair with its ground-truth assignment. Indices
// refer to Scene::detections.
struct PairCandidate {
  std::size_t human = 0;
  std::size_t object = 0;
  SpatialFeature spatial;
  int gt_label = 0;
  std::vector<int> gt_actions;  // sorted; empty for negatives
};

inline constexpr double kPairMatchIou = 0.5;

// Every (human, other detection) ordered pair. A pair is positive when some
// gt triplet has IoU >= match_iou on both boxes and the same object category;
// its actions are the union over all such triplets.
std::vector<PairCandidate> enumerate_pairs(const Scene& scene, double match_iou = kPairMatchIou);

struct InteractionParams {
  Parameter* semantic_table = nullptr;  // [C_o, d_sem], learned per-category embedding
  Mlp projection;                       // F_ho -> d_F -> d_F
};

InteractionParams make_interaction_params(ParameterStore& store, std::size_t num_objects,
                                          std::size_t appearance_dim, std::size_t semantic_dim,
                                          std::size_t interaction_dim, std::mt19937_64& rng);

// [N_det, d_app + d_sem]: appearance concatenated with the category embedding.
Var instance_features(Tape& tape, const Scene& scene, const InteractionParams& params);

struct PairBatch {
  std::vector<PairCandidate> pairs;
  Var human_features;   // F_h   [N, d_inst]
  Var object_features;  // F_o   [N, d_inst]
  Var spatial;          //       [N, 8]
  Var pair_features;    // F_ho  [N, 2 d_inst + 8]
  Var interaction;      // F     [N, d_F]
};

PairBatch build_pairs(Tape& tape, const Scene& scene, std::vector<PairCandidate> pairs,
                      const InteractionParams& params);

Tensor spatial_matrix(std::span<const PairCandidate> pairs);

inline constexpr std::size_t kNegativeFloor = 4;

// Indices (ascending) of the pairs kept for a training step: all positives
// plus the round(ratio * #positives) highest-scoring negatives (ties by
// index). Without scores the negatives are drawn at random. A scene without
// positives keeps min(negative_floor, #negatives) random negatives.
std::vector<std::size_t> sample_training_pairs(std::span<const PairCandidate> pairs, double ratio,
                                               std::span<const double> scores,
                                               std::mt19937_64& rng,
                                               std::size_t negative_floor = kNegativeFloor);

}  // namespace sctc
