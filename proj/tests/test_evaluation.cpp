#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "sctc/evaluation.hpp"
#include "sctc/geometry.hpp"

using namespace sctc;

namespace {

// One object category, two actions: HOI 0 = (0, 1), HOI 1 = (1, 1).
HoiVocabulary vocab2() {
  HoiVocabulary v;
  v.num_objects = 2;
  v.num_actions = 2;
  v.hois = {{0, 1, false}, {1, 1, true}};
  v.text_embeddings = Tensor({4, 2});
  return v;
}

HoiPrediction pred(Box h, Box o, std::size_t hoi, double score) {
  HoiPrediction p;
  p.human_box = h;
  p.object_box = o;
  p.object_category = 1;
  p.action = static_cast<int>(hoi);
  p.hoi = hoi;
  p.score = score;
  return p;
}

std::vector<bool> tp_of(std::initializer_list<int> seq) {
  std::vector<bool> v;
  for (int x : seq) v.push_back(x != 0);
  return v;
}

double ap_of(const std::vector<bool>& tp, std::size_t gt) {
  std::unique_ptr<bool[]> b(new bool[tp.size() + 1]);
  for (std::size_t i = 0; i < tp.size(); ++i) b[i] = tp[i];
  return *average_precision(std::span<const bool>(b.get(), tp.size()), gt);
}

// AP as a sum over true positives: each TP adds 1/gt times the best
// precision achieved at that rank or any later rank.
double brute_ap(const std::vector<bool>& tp, std::size_t gt) {
  double ap = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (!tp[i]) continue;
    double best = 0;
    for (std::size_t j = i; j < tp.size(); ++j) {
      const double hits = static_cast<double>(std::count(tp.begin(), tp.begin() + j + 1, true));
      best = std::max(best, hits / static_cast<double>(j + 1));
    }
    ap += best / static_cast<double>(gt);
  }
  return ap;
}

Box jitter(const Box& b, std::mt19937_64& rng, double s) {
  std::normal_distribution<double> n(0, s);
  Box r{b.x1 + n(rng), b.y1 + n(rng), b.x2 + n(rng), b.y2 + n(rng)};
  if (r.x2 <= r.x1) r.x2 = r.x1 + 1;
  if (r.y2 <= r.y1) r.y2 = r.y1 + 1;
  return r;
}

}  // namespace

TEST_CASE("iou hand cases") {
  CHECK(iou({0, 0, 2, 2}, {0, 0, 2, 2}) == 1.0);
  CHECK(iou({0, 0, 2, 2}, {3, 3, 4, 4}) == 0.0);
  CHECK(iou({0, 0, 2, 2}, {1, 0, 3, 2}) == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
  CHECK(iou({0, 0, 2, 2}, {2, 0, 4, 2}) == 0.0);  // touching edges
}

TEST_CASE("match_scene hand cases") {
  const HoiVocabulary v = vocab2();
  const Box h{0, 0, 10, 10}, o{10, 0, 20, 10};
  const std::vector<GtTriplet> gt{{h, o, 1, {0}}};
  const std::vector<HoiPrediction> one{pred(h, o, 0, 0.9)};
  MatchResult m = match_scene(one, gt, v);
  CHECK(m.true_positive == std::vector<bool>{true});
  CHECK(m.gt_count == std::vector<std::size_t>{1, 0});

  const std::vector<HoiPrediction> two{pred(h, o, 0, 0.5), pred(h, o, 0, 0.9)};
  m = match_scene(two, gt, v);
  CHECK(m.true_positive == std::vector<bool>{false, true});  // the higher score consumes the gt

  // Wrong category never matches.
  m = match_scene(std::vector<HoiPrediction>{pred(h, o, 1, 0.9)}, gt, v);
  CHECK(m.true_positive == std::vector<bool>{false});

  // Equal scores: the earlier prediction wins.
  m = match_scene(std::vector<HoiPrediction>{pred(h, o, 0, 0.7), pred(h, o, 0, 0.7)}, gt, v);
  CHECK(m.true_positive == std::vector<bool>{true, false});

  // IoU exactly 0.5 on one box is not enough (strictly greater is required).
  const Box h_half{0, 0, 10, 5};
  REQUIRE(iou(h_half, h) == 0.5);
  m = match_scene(std::vector<HoiPrediction>{pred(h_half, o, 0, 0.9)}, gt, v);
  CHECK(m.true_positive == std::vector<bool>{false});
}

TEST_CASE("greedy matching agrees with an exhaustive assignment oracle") {
  const HoiVocabulary v = vocab2();
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> cat(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<GtTriplet> gts;
    std::vector<std::size_t> gt_hoi;
    for (int g = 0; g < 3; ++g) {
      const double x = 20 * g * u(rng);
      const int a = cat(rng);
      gts.push_back({{x, 0, x + 10, 10}, {x + 8, 0, x + 18, 10}, 1, {a}});
      gt_hoi.push_back(static_cast<std::size_t>(a));
    }
    std::vector<HoiPrediction> preds;
    for (int p = 0; p < 5; ++p) {
      const GtTriplet& near = gts[static_cast<std::size_t>(p % 3)];
      // Coarse scores create ties.
      preds.push_back(pred(jitter(near.human, rng, 2.5), jitter(near.object, rng, 2.5),
                           static_cast<std::size_t>(cat(rng)), std::round(u(rng) * 4) / 4));
    }
    const MatchResult got = match_scene(preds, gts, v);

    // Rank of each prediction under (score desc, index asc).
    auto before = [&](std::size_t a, std::size_t b) {
      return preds[a].score != preds[b].score ? preds[a].score > preds[b].score : a < b;
    };
    auto overlap = [&](std::size_t p, std::size_t g) {
      if (preds[p].hoi != gt_hoi[g]) return -1.0;
      return std::min(iou(preds[p].human_box, gts[g].human), iou(preds[p].object_box, gts[g].object));
    };
    // Enumerate every injective assignment pred -> gt or none among valid
    // pairs, keep those satisfying the greedy conditions, expect exactly one.
    std::vector<int> assign(5, -1);
    std::vector<std::vector<int>> consistent;
    std::function<void(std::size_t)> rec = [&](std::size_t p) {
      if (p == 5) {
        bool ok = true;
        for (std::size_t i = 0; i < 5 && ok; ++i) {
          // Gts still free when prediction i takes its turn.
          auto free_at = [&](std::size_t g) {
            for (std::size_t j = 0; j < 5; ++j)
              if (assign[j] == int(g) && before(j, i)) return false;
            return true;
          };
          double best = 0.5;
          int best_g = -1;
          for (std::size_t g = 0; g < 3; ++g)
            if (free_at(g) && overlap(i, g) > best) best = overlap(i, g), best_g = int(g);
          ok = assign[i] == best_g;
        }
        if (ok) consistent.push_back(assign);
        return;
      }
      assign[p] = -1;
      rec(p + 1);
      for (int g = 0; g < 3; ++g) {
        if (overlap(p, g) <= 0.5) continue;
        if (std::find(assign.begin(), assign.begin() + p, g) != assign.begin() + p) continue;
        assign[p] = g;
        rec(p + 1);
      }
      assign[p] = -1;
    };
    rec(0);
    REQUIRE(consistent.size() == 1);
    for (std::size_t i = 0; i < 5; ++i) CHECK(got.true_positive[i] == (consistent[0][i] >= 0));
    // TP count never exceeds the gt count per category.
    for (std::size_t h = 0; h < 2; ++h) {
      std::size_t tp = 0;
      for (std::size_t i = 0; i < 5; ++i) tp += got.true_positive[i] && preds[i].hoi == h;
      CHECK(tp <= got.gt_count[h]);
    }
  }
}

TEST_CASE("average precision hand cases") {
  CHECK(ap_of(tp_of({1, 1}), 2) == 1.0);
  CHECK(ap_of(tp_of({0, 0, 0}), 2) == 0.0);
  CHECK(ap_of(tp_of({1, 0, 1}), 2) == doctest::Approx(1.0 * 0.5 + (2.0 / 3.0) * 0.5).epsilon(1e-15));
  CHECK(ap_of(tp_of({}), 3) == 0.0);
  CHECK_FALSE(average_precision(std::span<const bool>(), 0).has_value());
  // Missed gt caps recall.
  CHECK(ap_of(tp_of({1}), 4) == 0.25);
}

TEST_CASE("average precision matches a brute-force envelope on random sequences") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + trial % 15;
    std::vector<bool> tp(n);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += (tp[i] = u(rng) < 0.4);
    const std::size_t gt = hits + trial % 3;
    if (gt == 0) continue;
    CHECK(ap_of(tp, gt) == doctest::Approx(brute_ap(tp, gt)).epsilon(1e-12));

    // Appending a false positive below everything never raises AP.
    std::vector<bool> more = tp;
    more.push_back(false);
    CHECK(ap_of(more, gt) <= ap_of(tp, gt) + 1e-15);
  }
}

TEST_CASE("map_report means") {
  std::vector<CategoryAp> cats{{0, true, 1, 0.2}, {1, false, 2, 0.6}, {2, false, 1, 0.8}};
  MapReport r = map_report(cats);
  CHECK(*r.full == doctest::Approx(1.6 / 3).epsilon(1e-12));
  CHECK(*r.rare == doctest::Approx(0.2));
  CHECK(*r.non_rare == doctest::Approx(0.7));

  // A zero-gt category has no AP and changes nothing.
  cats.push_back({3, true, 0, std::nullopt});
  const MapReport r2 = map_report(cats);
  CHECK(*r2.full == *r.full);
  CHECK(*r2.rare == *r.rare);

  std::vector<CategoryAp> same{{0, true, 1, 0.4}, {1, false, 1, 0.4}};
  r = map_report(same);
  CHECK(*r.full == doctest::Approx(0.4));
  CHECK(*r.rare == doctest::Approx(0.4));
  CHECK(*r.non_rare == doctest::Approx(0.4));

  std::vector<CategoryAp> no_rare{{0, false, 1, 0.5}};
  r = map_report(no_rare);
  CHECK_FALSE(r.rare.has_value());
  CHECK(to_json(r)["rare"].is_null());
  CHECK(to_json(r)["full"].get<double>() == 0.5);
}

TEST_CASE("mAP is invariant under monotone rescaling of scores") {
  const HoiVocabulary v = vocab2();
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u(0.01, 1);
  for (int trial = 0; trial < 100; ++trial) {
    MapAccumulator plain(v), squashed(v);
    for (int scene = 0; scene < 4; ++scene) {
      std::vector<GtTriplet> gts;
      for (int g = 0; g < 2; ++g) {
        const double x = 30.0 * g;
        gts.push_back({{x, 0, x + 10, 10}, {x + 8, 0, x + 18, 10}, 1, {int(trial + g) % 2}});
      }
      std::vector<HoiPrediction> preds;
      for (int p = 0; p < 6; ++p) {
        const GtTriplet& near = gts[static_cast<std::size_t>(p % 2)];
        preds.push_back(pred(jitter(near.human, rng, 2), jitter(near.object, rng, 2),
                             static_cast<std::size_t>(p % 2), u(rng)));
      }
      plain.add_scene(preds, gts);
      for (auto& p : preds) p.score = std::exp(3 * p.score) - 0.5;  // strictly increasing
      squashed.add_scene(preds, gts);
    }
    const MapReport a = plain.finish(), b = squashed.finish();
    REQUIRE(a.full.has_value());
    CHECK(*a.full == *b.full);
    for (std::size_t h = 0; h < 2; ++h) CHECK(a.per_category[h].ap == b.per_category[h].ap);
  }
}
