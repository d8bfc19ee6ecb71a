#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "sctc/decoder.hpp"
#include "sctc/fixtures.hpp"
#include "sctc/geometry.hpp"

namespace sctc {

inline constexpr double kMatchIou = 0.5;

struct MatchResult {
  std::vector<bool> true_positive;    // per prediction, in input order
  std::vector<std::size_t> gt_count;  // per HOI category
};

// Greedy matching in descending score order (ties by prediction index). A
// prediction is a true positive when an unmatched gt instance of the same HOI
// has min(IoU_human, IoU_object) > threshold; that instance is consumed.
MatchResult match_scene(std::span<const HoiPrediction> predictions,
                        std::span<const GtTriplet> gts, const HoiVocabulary& vocab,
                        double threshold = kMatchIou);

// All-point interpolated AP over a TP/FP sequence already sorted by
// descending score. nullopt when gt_count is 0.
std::optional<double> average_precision(std::span<const bool> tp_sorted, std::size_t gt_count);

struct CategoryAp {
  std::size_t hoi = 0;
  bool rare = false;
  std::size_t gt_count = 0;
  std::optional<double> ap;
};

struct MapReport {
  std::optional<double> full;
  std::optional<double> rare;
  std::optional<double> non_rare;
  std::vector<CategoryAp> per_category;
};

// Means over categories with an AP; empty subsets stay absent.
MapReport map_report(std::span<const CategoryAp> categories);

// Folds per-scene predictions into per-category ranked lists.
class MapAccumulator {
 public:
  explicit MapAccumulator(const HoiVocabulary& vocab);
  void add_scene(std::span<const HoiPrediction> predictions, std::span<const GtTriplet> gts);
  MapReport finish() const;

 private:
  struct Scored {
    double score;
    std::size_t order;
    bool tp;
  };
  const HoiVocabulary& vocab_;
  std::vector<std::vector<Scored>> per_hoi_;
  std::vector<std::size_t> gt_count_;
  std::size_t order_ = 0;
};

nlohmann::json to_json(const MapReport& report);

}  // namespace sctc
