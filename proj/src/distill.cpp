#include "sctc/distill.hpp"

#include "sctc/error.hpp"

namespace sctc {

namespace {

std::vector<double> row_mean(const Tensor& table, std::size_t begin, std::size_t end) {
  const std::size_t d = table.cols();
  std::vector<double> m(d, 0.0);
  for (std::size_t r = begin; r < end; ++r)
    for (std::size_t k = 0; k < d; ++k) m[k] += table[r * d + k];
  for (auto& v : m) v /= static_cast<double>(end - begin);
  return m;
}

}  // namespace

std::vector<KdTarget> build_targets(std::span<const PairCandidate> pairs, const Scene& scene,
                                    const HoiVocabulary& vocab, const KdOptions& options) {
  const Tensor& table = vocab.text_embeddings;
  const std::size_t d = table.cols();
  const std::size_t neg_rows = options.negatives_use_all_rows ? table.rows() : vocab.num_hois();
  const std::vector<double> negative = row_mean(table, 0, neg_rows);

  std::vector<KdTarget> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (!p.gt_label) {
      out.push_back({negative, KdProvenance::kNegativeAverage});
      continue;
    }
    const int object = scene.detections.at(p.object).category;
    std::vector<double> e(d, 0.0);
    for (int a : p.gt_actions) {
      const auto row = vocab.hoi_index(a, object);
      if (!row) {
        throw VocabularyError("no HOI category for action " + std::to_string(a) + " with object " +
                              std::to_string(object));
      }
      for (std::size_t k = 0; k < d; ++k) e[k] += table[*row * d + k];
    }
    if (p.gt_actions.empty()) throw VocabularyError("positive pair without actions");
    for (auto& v : e) v /= static_cast<double>(p.gt_actions.size());
    out.push_back({std::move(e), p.gt_actions.size() == 1 ? KdProvenance::kSingleHoi
                                                          : KdProvenance::kMultiHoiAverage});
  }
  return out;
}

Tensor stack_targets(std::span<const KdTarget> targets) {
  const std::size_t d = targets.empty() ? 0 : targets.front().embedding.size();
  Tensor t({targets.size(), d});
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].embedding.size() != d) throw DimensionError("ragged KD targets");
    std::copy(targets[i].embedding.begin(), targets[i].embedding.end(), t.data().begin() + i * d);
  }
  return t;
}

Var kd_loss(Var features, const Tensor& targets) {
  if (features.shape() != targets.shape() || features.value().rank() != 2) {
    throw DimensionError("kd_loss: features " + shape_str(features.shape()) + " vs targets " +
                         shape_str(targets.shape()));
  }
  const std::size_t n = features.shape()[0];
  if (n == 0) throw DimensionError("kd_loss: no pairs");
  Var residual = sub(features.tape->constant(targets), features);
  return scale(sum(abs(residual)), 1.0 / static_cast<double>(n));
}

}  // namespace sctc
