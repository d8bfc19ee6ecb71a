#include "sctc/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sctc/error.hpp"

namespace sctc {

std::vector<PairCandidate> enumerate_pairs(const Scene& scene, double match_iou) {
  std::vector<PairCandidate> out;
  const auto& dets = scene.detections;
  for (std::size_t h = 0; h < dets.size(); ++h) {
    if (!dets[h].is_human) continue;
    for (std::size_t o = 0; o < dets.size(); ++o) {
      if (o == h) continue;
      PairCandidate p;
      p.human = h;
      p.object = o;
      p.spatial = spatial_feature(dets[h].box, dets[o].box, scene.width, scene.height);
      for (const auto& gt : scene.gt_triplets) {
        if (gt.object_category != dets[o].category) continue;
        if (iou(dets[h].box, gt.human) < match_iou || iou(dets[o].box, gt.object) < match_iou) {
          continue;
        }
        p.gt_label = 1;
        p.gt_actions.insert(p.gt_actions.end(), gt.actions.begin(), gt.actions.end());
      }
      std::sort(p.gt_actions.begin(), p.gt_actions.end());
      p.gt_actions.erase(std::unique(p.gt_actions.begin(), p.gt_actions.end()),
                         p.gt_actions.end());
      out.push_back(std::move(p));
    }
  }
  return out;
}

InteractionParams make_interaction_params(ParameterStore& store, std::size_t num_objects,
                                          std::size_t appearance_dim, std::size_t semantic_dim,
                                          std::size_t interaction_dim, std::mt19937_64& rng) {
  InteractionParams p;
  p.semantic_table =
      &store.add("interaction.semantic_table", {num_objects, semantic_dim}, Init::kNormal, rng, 0.5);
  const std::size_t inst = appearance_dim + semantic_dim;
  p.projection = Mlp::create(store, "interaction.projection",
                             {2 * inst + SpatialFeature::kDim, interaction_dim, interaction_dim}, rng);
  return p;
}

Var instance_features(Tape& tape, const Scene& scene, const InteractionParams& params) {
  const std::size_t n = scene.detections.size();
  const std::size_t d_app = scene.appearance_dim;
  Tensor app({n, d_app});
  std::vector<std::size_t> cats(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = scene.detections[i].appearance;
    if (a.size() != d_app) throw DimensionError("appearance length differs from scene dimension");
    std::copy(a.begin(), a.end(), app.data().begin() + i * d_app);
    cats[i] = static_cast<std::size_t>(scene.detections[i].category);
  }
  Var semantic = gather_rows(tape.param(*params.semantic_table), cats);
  return concat({tape.constant(std::move(app)), semantic});
}

Tensor spatial_matrix(std::span<const PairCandidate> pairs) {
  Tensor sp({pairs.size(), SpatialFeature::kDim});
  for (std::size_t i = 0; i < pairs.size(); ++i)
    std::copy(pairs[i].spatial.values.begin(), pairs[i].spatial.values.end(),
              sp.data().begin() + i * SpatialFeature::kDim);
  return sp;
}

PairBatch build_pairs(Tape& tape, const Scene& scene, std::vector<PairCandidate> pairs,
                      const InteractionParams& params) {
  if (pairs.empty()) throw DimensionError("build_pairs: no candidate pairs");
  PairBatch b;
  std::vector<std::size_t> hs, os;
  for (const auto& p : pairs) {
    hs.push_back(p.human);
    os.push_back(p.object);
  }
  const Var inst = instance_features(tape, scene, params);
  b.human_features = gather_rows(inst, hs);
  b.object_features = gather_rows(inst, os);
  b.spatial = tape.constant(spatial_matrix(pairs));
  b.pair_features = concat({b.human_features, b.object_features, b.spatial});
  b.interaction = mlp(tape, b.pair_features, params.projection);
  b.pairs = std::move(pairs);
  return b;
}

std::vector<std::size_t> sample_training_pairs(std::span<const PairCandidate> pairs, double ratio,
                                               std::span<const double> scores,
                                               std::mt19937_64& rng,
                                               std::size_t negative_floor) {
  if (!(ratio > 0.0)) throw ConfigError("hard-mining ratio must be positive");
  if (!scores.empty() && scores.size() != pairs.size()) {
    throw DimensionError("sample_training_pairs: one score per pair required");
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < pairs.size(); ++i) (pairs[i].gt_label ? pos : neg).push_back(i);

  std::size_t keep;
  bool random_pick = scores.empty();
  if (pos.empty()) {
    keep = std::min(negative_floor, neg.size());
    random_pick = true;
  } else {
    keep = std::min(static_cast<std::size_t>(std::llround(ratio * static_cast<double>(pos.size()))),
                    neg.size());
  }
  if (random_pick) {
    std::shuffle(neg.begin(), neg.end(), rng);
  } else {
    std::stable_sort(neg.begin(), neg.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  }
  std::vector<std::size_t> out = pos;
  out.insert(out.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace sctc
