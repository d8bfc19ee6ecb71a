#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sctc/geometry.hpp"
#include "sctc/tensor.hpp"

namespace sctc {

inline constexpr int kPersonCategory = 0;

struct Detection {
  Box box;
  int category = 0;
  bool is_human = false;
  double score = 1.0;
  std::vector<double> appearance;

  bool operator==(const Detection&) const = default;
};

struct GtTriplet {
  Box human;
  Box object;
  int object_category = 0;
  std::vector<int> actions;  // sorted, non-empty

  bool operator==(const GtTriplet&) const = default;
};

// One image's worth of detector output and annotations. `feature_map` is
// [Hf, Wf, d_map] and stands in for backbone features.
struct Scene {
  std::string id;
  double width = 0;
  double height = 0;
  std::size_t appearance_dim = 0;
  std::vector<Detection> detections;
  Tensor feature_map;
  std::vector<GtTriplet> gt_triplets;

  std::size_t num_humans() const;
  bool operator==(const Scene&) const = default;
};

struct HoiCategory {
  int action = 0;
  int object = 0;
  bool rare = false;

  bool operator==(const HoiCategory&) const = default;
};

// HOI key space plus one fixed text embedding per key. Rows [0, num_hois)
// are HOI categories; rows [num_hois, num_hois + C_o) are the
// "no interaction with <object>" entries, one per object category.
struct HoiVocabulary {
  int num_objects = 0;
  int num_actions = 0;
  std::vector<HoiCategory> hois;
  Tensor text_embeddings;

  std::size_t num_hois() const { return hois.size(); }
  std::size_t embedding_dim() const { return text_embeddings.cols(); }
  std::optional<std::size_t> hoi_index(int action, int object) const;
  std::size_t non_interaction_row(int object) const { return hois.size() + object; }
  // Actions that form a valid HOI with this object category, ascending.
  std::vector<int> actions_for_object(int object) const;

  bool operator==(const HoiVocabulary&) const = default;
};

struct DatasetConfig {
  std::uint64_t seed = 42;
  std::size_t train_scenes = 200;
  std::size_t test_scenes = 50;
  int num_objects = 6;  // including person
  int num_actions = 6;
  // Explicit (action, object) table; generated from the seed when empty.
  std::vector<std::pair<int, int>> hoi_table;
  int min_actions_per_object = 3;
  int max_actions_per_object = 4;

  std::size_t appearance_dim = 32;
  std::size_t map_dim = 64;
  std::size_t map_height = 8;
  std::size_t map_width = 8;
  std::size_t text_dim = 64;
  double image_width = 640;
  double image_height = 480;

  double appearance_noise = 0.35;
  double map_noise = 0.3;
  double layout_noise = 0.08;
  double min_detection_iou = 0.7;
  double min_detection_score = 0.8;  // scores are uniform on [min, 1]
  double multi_action_prob = 0.25;
  // Fraction of scenes that contain two triplets sharing a human or an object.
  double shared_fraction = 0.35;
  // When set, the second triplet of a shared pair repeats its sibling's
  // action and carries no cues of its own.
  bool cross_triplet_correlation = true;
  int max_extra_humans = 2;
  int min_clutter_objects = 3;
  int max_clutter_objects = 5;
  // Chance that a clutter object copies the category of an interacting one.
  double clutter_same_category_prob = 0.5;
  // Chance that a non-interacting human or clutter object still carries the
  // appearance cue of one action, so cues alone do not reveal interaction.
  double decoy_cue_prob = 0.5;
};

struct Dataset {
  std::vector<Scene> train;
  std::vector<Scene> test;
  HoiVocabulary vocab;
};

// Deterministic per config. Throws ConfigError on degenerate configs.
Dataset generate_dataset(const DatasetConfig& config);

// Noise-free appearance of an instance of `category` carrying the cues of
// `cue_actions`, as drawn by generate_dataset(config).
std::vector<double> appearance_centroid(const DatasetConfig& config, int category, bool human,
                                        const std::vector<int>& cue_actions);

// True when two gt triplets of the scene share a human box or an object box.
bool has_shared_instance(const Scene& scene);

// Structural checks (box validity and containment, label ranges, tensor
// shapes). Throws ValidationError. Pass a vocabulary to range-check labels.
void validate_scene(const Scene& scene, const HoiVocabulary* vocab = nullptr);

// Rarity by instance count: the bottom quartile (by count, ties by index)
// of HOI categories is rare.
void assign_rarity(HoiVocabulary& vocab, const std::vector<Scene>& scenes);

}  // namespace sctc
