#include "sctc/evaluation.hpp"

#include <algorithm>
#include <memory>
#include <numeric>

namespace sctc {

namespace {

struct GtInstance {
  std::size_t triplet;
  std::size_t hoi;
  bool used = false;
};

std::vector<GtInstance> gt_instances(std::span<const GtTriplet> gts, const HoiVocabulary& vocab) {
  std::vector<GtInstance> out;
  for (std::size_t t = 0; t < gts.size(); ++t) {
    for (int a : gts[t].actions) {
      if (auto hoi = vocab.hoi_index(a, gts[t].object_category)) out.push_back({t, *hoi});
    }
  }
  return out;
}

}  // namespace

MatchResult match_scene(std::span<const HoiPrediction> predictions,
                        std::span<const GtTriplet> gts, const HoiVocabulary& vocab,
                        double threshold) {
  MatchResult r;
  r.true_positive.assign(predictions.size(), false);
  r.gt_count.assign(vocab.num_hois(), 0);
  std::vector<GtInstance> instances = gt_instances(gts, vocab);
  for (const auto& g : instances) ++r.gt_count[g.hoi];

  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].score > predictions[b].score;
  });
  for (std::size_t i : order) {
    const HoiPrediction& p = predictions[i];
    GtInstance* best = nullptr;
    double best_overlap = threshold;
    for (auto& g : instances) {
      if (g.used || g.hoi != p.hoi) continue;
      const double overlap = std::min(iou(p.human_box, gts[g.triplet].human),
                                      iou(p.object_box, gts[g.triplet].object));
      if (overlap > best_overlap) {
        best_overlap = overlap;
        best = &g;
      }
    }
    if (best) {
      best->used = true;
      r.true_positive[i] = true;
    }
  }
  return r;
}

std::optional<double> average_precision(std::span<const bool> tp_sorted, std::size_t gt_count) {
  if (gt_count == 0) return std::nullopt;
  const std::size_t n = tp_sorted.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += tp_sorted[i] ? 1 : 0;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(gt_count);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

MapReport map_report(std::span<const CategoryAp> categories) {
  MapReport r;
  r.per_category.assign(categories.begin(), categories.end());
  double s_all = 0, s_rare = 0, s_non = 0;
  std::size_t n_all = 0, n_rare = 0, n_non = 0;
  for (const auto& c : categories) {
    if (!c.ap) continue;
    s_all += *c.ap;
    ++n_all;
    if (c.rare) {
      s_rare += *c.ap;
      ++n_rare;
    } else {
      s_non += *c.ap;
      ++n_non;
    }
  }
  if (n_all) r.full = s_all / static_cast<double>(n_all);
  if (n_rare) r.rare = s_rare / static_cast<double>(n_rare);
  if (n_non) r.non_rare = s_non / static_cast<double>(n_non);
  return r;
}

MapAccumulator::MapAccumulator(const HoiVocabulary& vocab)
    : vocab_(vocab), per_hoi_(vocab.num_hois()), gt_count_(vocab.num_hois(), 0) {}

void MapAccumulator::add_scene(std::span<const HoiPrediction> predictions,
                               std::span<const GtTriplet> gts) {
  const MatchResult m = match_scene(predictions, gts, vocab_);
  for (std::size_t h = 0; h < gt_count_.size(); ++h) gt_count_[h] += m.gt_count[h];
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    per_hoi_[predictions[i].hoi].push_back({predictions[i].score, order_++, m.true_positive[i]});
  }
}

MapReport MapAccumulator::finish() const {
  std::vector<CategoryAp> cats;
  for (std::size_t h = 0; h < per_hoi_.size(); ++h) {
    std::vector<Scored> list = per_hoi_[h];
    std::sort(list.begin(), list.end(), [](const Scored& a, const Scored& b) {
      return a.score != b.score ? a.score > b.score : a.order < b.order;
    });
    auto flags = std::make_unique<bool[]>(list.size());
    for (std::size_t i = 0; i < list.size(); ++i) flags[i] = list[i].tp;
    const std::span<const bool> tp(flags.get(), list.size());
    cats.push_back({h, vocab_.hois[h].rare, gt_count_[h], average_precision(tp, gt_count_[h])});
  }
  return map_report(cats);
}

nlohmann::json to_json(const MapReport& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : r.per_category) {
    cats.push_back(
        {{"hoi", c.hoi}, {"rare", c.rare}, {"gt_count", c.gt_count}, {"ap", opt(c.ap)}});
  }
  return {{"full", opt(r.full)},
          {"rare", opt(r.rare)},
          {"non_rare", opt(r.non_rare)},
          {"per_category", cats}};
}

}  // namespace sctc
