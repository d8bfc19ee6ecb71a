#include "sctc/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "sctc/error.hpp"

namespace sctc {

std::size_t Scene::num_humans() const {
  return static_cast<std::size_t>(std::count_if(detections.begin(), detections.end(),
                                                [](const Detection& d) { return d.is_human; }));
}

std::optional<std::size_t> HoiVocabulary::hoi_index(int action, int object) const {
  for (std::size_t i = 0; i < hois.size(); ++i) {
    if (hois[i].action == action && hois[i].object == object) return i;
  }
  return std::nullopt;
}

std::vector<int> HoiVocabulary::actions_for_object(int object) const {
  std::vector<int> out;
  for (const auto& h : hois) {
    if (h.object == object) out.push_back(h.action);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

using Vec = std::vector<double>;

Vec gaussian_vec(std::size_t n, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, sigma);
  Vec v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// Cluster centroids and layout priors shared by every scene of a dataset.
struct World {
  std::vector<Vec> category_centroid;
  std::vector<Vec> human_action_cue;
  std::vector<Vec> object_action_cue;
  std::vector<Vec> map_cue;
  Vec action_angle;
  Vec action_distance;
  Vec hoi_weight;
};

struct Instance {
  Box box;
  int category = 0;
  std::set<int> cue_actions;
};

struct TripletDraft {
  std::size_t human = 0;
  std::size_t object = 0;
  std::vector<int> actions;
  bool suppressed = false;
};

class SceneBuilder {
 public:
  SceneBuilder(const World& world, const HoiVocabulary& vocab, const DatasetConfig& cfg,
               std::mt19937_64& rng)
      : world_(world), vocab_(vocab), cfg_(cfg), rng_(rng) {}

  Scene build(const std::string& id, bool shared) {
    if (shared) {
      add_shared_group();
      if (uniform() < 0.3) add_independent_triplet();
    } else {
      const int n = uniform() < 0.5 ? 1 : 2;
      for (int i = 0; i < n; ++i) add_independent_triplet();
    }
    const int extra_humans = std::uniform_int_distribution<int>(0, cfg_.max_extra_humans)(rng_);
    std::uniform_int_distribution<int> any_action(0, cfg_.num_actions - 1);
    for (int i = 0; i < extra_humans; ++i) {
      humans_.push_back({place_human(), kPersonCategory, {}});
      if (uniform() < cfg_.decoy_cue_prob) humans_.back().cue_actions.insert(any_action(rng_));
    }
    const int clutter = std::uniform_int_distribution<int>(cfg_.min_clutter_objects,
                                                           cfg_.max_clutter_objects)(rng_);
    std::uniform_int_distribution<int> cat(1, cfg_.num_objects - 1);
    const std::size_t interacting = objects_.size();
    for (int i = 0; i < clutter; ++i) {
      Box b = random_box(30, 90, 30, 90);
      int category = cat(rng_);
      if (interacting > 0 && uniform() < cfg_.clutter_same_category_prob) {
        category = objects_[std::uniform_int_distribution<std::size_t>(0, interacting - 1)(rng_)]
                       .category;
      }
      objects_.push_back({b, category, {}});
      const std::vector<int> valid = vocab_.actions_for_object(category);
      if (!valid.empty() && uniform() < cfg_.decoy_cue_prob) {
        objects_.back().cue_actions.insert(
            valid[std::uniform_int_distribution<std::size_t>(0, valid.size() - 1)(rng_)]);
      }
    }
    return finish(id);
  }

 private:
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }

  Box fit_inside(Box b) const {
    const double w = b.width(), h = b.height();
    b.x1 = std::clamp(b.x1, 0.0, cfg_.image_width - w);
    b.y1 = std::clamp(b.y1, 0.0, cfg_.image_height - h);
    b.x2 = b.x1 + w;
    b.y2 = b.y1 + h;
    return b;
  }

  Box random_box(double wmin, double wmax, double hmin, double hmax) {
    const double w = uniform(wmin, wmax), h = uniform(hmin, hmax);
    const double x = uniform(0.0, cfg_.image_width - w), y = uniform(0.0, cfg_.image_height - h);
    return {x, y, x + w, y + h};
  }

  Box place_human() { return random_box(50, 110, 110, 220); }

  Box box_at(double cx, double cy, double w, double h) const {
    return fit_inside({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
  }

  // Object placed at the action's layout prior around the human, optionally
  // rotated by `angle_shift`.
  Box place_object_near(const Box& human, int action, double angle_shift) {
    const double scale = human.height();
    std::normal_distribution<double> jitter(0.0, cfg_.layout_noise * scale);
    const double r = world_.action_distance[action] * scale;
    const double theta = world_.action_angle[action] + angle_shift;
    const double cx = human.cx() + r * std::cos(theta) + jitter(rng_);
    const double cy = human.cy() + r * std::sin(theta) + jitter(rng_);
    return box_at(cx, cy, uniform(30, 90), uniform(30, 90));
  }

  std::size_t sample_hoi() {
    std::discrete_distribution<std::size_t> dist(world_.hoi_weight.begin(),
                                                 world_.hoi_weight.end());
    return dist(rng_);
  }

  std::vector<int> action_set(int primary, int object) {
    std::vector<int> acts{primary};
    if (uniform() < cfg_.multi_action_prob) {
      std::vector<int> others;
      for (int a : vocab_.actions_for_object(object))
        if (a != primary) others.push_back(a);
      if (!others.empty()) {
        acts.push_back(others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(
            rng_)]);
      }
    }
    std::sort(acts.begin(), acts.end());
    return acts;
  }

  void add_triplet(std::size_t h, std::size_t o, std::vector<int> acts, bool suppressed) {
    if (!suppressed) {
      humans_[h].cue_actions.insert(acts.begin(), acts.end());
      objects_[o].cue_actions.insert(acts.begin(), acts.end());
    }
    triplets_.push_back({h, o, std::move(acts), suppressed});
  }

  // Returns the primary action of the new triplet.
  int add_independent_triplet() {
    const HoiCategory& hoi = vocab_.hois[sample_hoi()];
    humans_.push_back({place_human(), kPersonCategory, {}});
    objects_.push_back(
        {place_object_near(humans_.back().box, hoi.action, 0.0), hoi.object, {}});
    add_triplet(humans_.size() - 1, objects_.size() - 1, action_set(hoi.action, hoi.object),
                false);
    return hoi.action;
  }

  void add_shared_group() {
    const int primary = add_independent_triplet();
    const std::size_t h = humans_.size() - 1;
    const std::size_t o = objects_.size() - 1;
    const std::vector<int> first_actions = triplets_.back().actions;
    const bool correlated = cfg_.cross_triplet_correlation;
    if (uniform() < 0.5) {
      // Second object for the same human, on the opposite side.
      int category = 0;
      std::vector<int> acts;
      int layout_action = primary;
      if (correlated) {
        std::vector<int> cats;
        for (const auto& hc : vocab_.hois)
          if (hc.action == primary) cats.push_back(hc.object);
        category = cats[std::uniform_int_distribution<std::size_t>(0, cats.size() - 1)(rng_)];
        const std::vector<int> valid = vocab_.actions_for_object(category);
        for (int a : first_actions)
          if (std::binary_search(valid.begin(), valid.end(), a)) acts.push_back(a);
      } else {
        const HoiCategory& hoi = vocab_.hois[sample_hoi()];
        category = hoi.object;
        layout_action = hoi.action;
        acts = action_set(hoi.action, hoi.object);
      }
      objects_.push_back(
          {place_object_near(humans_[h].box, layout_action, std::numbers::pi), category, {}});
      add_triplet(h, objects_.size() - 1, std::move(acts), correlated);
    } else {
      // Second human sharing the object, mirrored through the object center.
      const Box& hb = humans_[h].box;
      const Box& ob = objects_[o].box;
      const Box h2 = box_at(2.0 * ob.cx() - hb.cx(), 2.0 * ob.cy() - hb.cy(), uniform(50, 110),
                            uniform(110, 220));
      humans_.push_back({h2, kPersonCategory, {}});
      std::vector<int> acts = first_actions;
      if (!correlated) {
        const int category = objects_[o].category;
        const std::vector<int> valid = vocab_.actions_for_object(category);
        const int p = valid[std::uniform_int_distribution<std::size_t>(0, valid.size() - 1)(rng_)];
        acts = action_set(p, category);
      }
      add_triplet(humans_.size() - 1, o, std::move(acts), correlated);
    }
  }

  Box jitter(const Box& truth) {
    const double sigma = 0.06;
    std::normal_distribution<double> n(0.0, 1.0);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double w = truth.width(), h = truth.height();
      Box b{truth.x1 + sigma * w * n(rng_), truth.y1 + sigma * h * n(rng_),
            truth.x2 + sigma * w * n(rng_), truth.y2 + sigma * h * n(rng_)};
      b.x1 = std::max(b.x1, 0.0);
      b.y1 = std::max(b.y1, 0.0);
      b.x2 = std::min(b.x2, cfg_.image_width);
      b.y2 = std::min(b.y2, cfg_.image_height);
      if (b.valid() && iou(b, truth) >= cfg_.min_detection_iou) return b;
    }
    return truth;
  }

  Vec appearance(const Instance& inst, bool human) {
    Vec v = world_.category_centroid[inst.category];
    const auto& cues = human ? world_.human_action_cue : world_.object_action_cue;
    for (int a : inst.cue_actions)
      for (std::size_t d = 0; d < v.size(); ++d) v[d] += cues[a][d];
    if (cfg_.appearance_noise > 0.0) {
      const Vec noise = gaussian_vec(v.size(), cfg_.appearance_noise, rng_);
      for (std::size_t d = 0; d < v.size(); ++d) v[d] += noise[d];
    }
    for (auto& x : v) x = to_f32(x);
    return v;
  }

  Scene finish(const std::string& id) {
    Scene s;
    s.id = id;
    s.width = cfg_.image_width;
    s.height = cfg_.image_height;
    s.appearance_dim = cfg_.appearance_dim;
    for (const auto& h : humans_) {
      s.detections.push_back({jitter(h.box), kPersonCategory, true, 0.0, appearance(h, true)});
    }
    for (const auto& o : objects_) {
      s.detections.push_back({jitter(o.box), o.category, false, 0.0, appearance(o, false)});
    }
    for (auto& d : s.detections) d.score = to_f32(uniform(cfg_.min_detection_score, 1.0));
    std::shuffle(s.detections.begin(), s.detections.end(), rng_);

    const std::size_t hf = cfg_.map_height, wf = cfg_.map_width, dm = cfg_.map_dim;
    s.feature_map = Tensor({hf, wf, dm});
    if (cfg_.map_noise > 0.0) {
      std::normal_distribution<double> n(0.0, cfg_.map_noise);
      for (auto& x : s.feature_map.data()) x = n(rng_);
    }
    for (const auto& t : triplets_) {
      const Box& hb = humans_[t.human].box;
      const Box& ob = objects_[t.object].box;
      s.gt_triplets.push_back({hb, ob, objects_[t.object].category, t.actions});
      if (t.suppressed) continue;
      const Box u = union_box(hb, ob);
      const auto gx = std::min(wf - 1, static_cast<std::size_t>(u.cx() / cfg_.image_width * wf));
      const auto gy = std::min(hf - 1, static_cast<std::size_t>(u.cy() / cfg_.image_height * hf));
      for (int a : t.actions)
        for (std::size_t d = 0; d < dm; ++d) s.feature_map[(gy * wf + gx) * dm + d] += world_.map_cue[a][d];
    }
    for (auto& x : s.feature_map.data()) x = to_f32(x);
    return s;
  }

  const World& world_;
  const HoiVocabulary& vocab_;
  const DatasetConfig& cfg_;
  std::mt19937_64& rng_;
  std::vector<Instance> humans_;
  std::vector<Instance> objects_;
  std::vector<TripletDraft> triplets_;
};

void check_config(const DatasetConfig& c) {
  if (c.train_scenes + c.test_scenes == 0) throw ConfigError("dataset needs at least one scene");
  if (c.num_objects < 2) throw ConfigError("need person plus at least one object category");
  if (c.num_actions < 2) throw ConfigError("need at least two action categories");
  if (c.appearance_dim == 0 || c.map_dim == 0 || c.text_dim == 0 || c.map_height == 0 ||
      c.map_width == 0) {
    throw ConfigError("feature dimensions must be positive");
  }
  if (c.min_actions_per_object < 1 || c.max_actions_per_object < c.min_actions_per_object) {
    throw ConfigError("invalid actions-per-object range");
  }
  if (c.shared_fraction < 0.0 || c.shared_fraction > 1.0) {
    throw ConfigError("shared fraction must lie in [0,1]");
  }
  if (c.min_detection_iou <= 0.0 || c.min_detection_iou > 1.0) {
    throw ConfigError("minimum detection IoU must lie in (0,1]");
  }
  if (!(c.min_detection_score >= 0.0 && c.min_detection_score <= 1.0)) {
    throw ConfigError("minimum detection score must lie in [0,1]");
  }
  if (!(c.decoy_cue_prob >= 0.0 && c.decoy_cue_prob <= 1.0)) {
    throw ConfigError("decoy cue probability must lie in [0,1]");
  }
  if (!(c.clutter_same_category_prob >= 0.0 && c.clutter_same_category_prob <= 1.0)) {
    throw ConfigError("clutter same-category probability must lie in [0,1]");
  }
  if (c.min_clutter_objects < 0 || c.max_clutter_objects < c.min_clutter_objects ||
      c.max_extra_humans < 0) {
    throw ConfigError("invalid clutter counts");
  }
}

HoiVocabulary make_vocabulary(const DatasetConfig& cfg, std::mt19937_64& rng) {
  HoiVocabulary v;
  v.num_objects = cfg.num_objects;
  v.num_actions = cfg.num_actions;
  if (!cfg.hoi_table.empty()) {
    std::set<std::pair<int, int>> seen;
    for (auto [a, o] : cfg.hoi_table) {
      if (a < 0 || a >= cfg.num_actions || o < 1 || o >= cfg.num_objects) {
        throw ConfigError("HOI (" + std::to_string(a) + "," + std::to_string(o) +
                          ") out of range");
      }
      if (seen.insert({a, o}).second) v.hois.push_back({a, o, false});
    }
  } else {
    std::uniform_int_distribution<int> count(cfg.min_actions_per_object,
                                             std::min(cfg.max_actions_per_object, cfg.num_actions));
    for (int o = 1; o < cfg.num_objects; ++o) {
      std::vector<int> actions(cfg.num_actions);
      std::iota(actions.begin(), actions.end(), 0);
      std::shuffle(actions.begin(), actions.end(), rng);
      actions.resize(static_cast<std::size_t>(count(rng)));
      std::sort(actions.begin(), actions.end());
      for (int a : actions) v.hois.push_back({a, o, false});
    }
  }
  if (v.hois.empty()) throw ConfigError("empty HOI table");

  // Compositional stand-ins for text-encoder output: action part + object
  // part + a per-row component, unit-normalized.
  const std::size_t d = cfg.text_dim;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Vec> act(cfg.num_actions), obj(cfg.num_objects);
  for (auto& a : act) a = gaussian_vec(d, s, rng);
  for (auto& o : obj) o = gaussian_vec(d, s, rng);
  const Vec none = gaussian_vec(d, s, rng);
  const std::size_t rows = v.hois.size() + static_cast<std::size_t>(cfg.num_objects);
  v.text_embeddings = Tensor({rows, d});
  for (std::size_t r = 0; r < rows; ++r) {
    const bool is_hoi = r < v.hois.size();
    const Vec& a = is_hoi ? act[v.hois[r].action] : none;
    const Vec& o = is_hoi ? obj[v.hois[r].object] : obj[r - v.hois.size()];
    const Vec u = gaussian_vec(d, 0.5 * s, rng);
    Vec e(d);
    double norm = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      e[k] = a[k] + o[k] + u[k];
      norm += e[k] * e[k];
    }
    norm = std::sqrt(norm);
    for (std::size_t k = 0; k < d; ++k) v.text_embeddings[r * d + k] = to_f32(e[k] / norm);
  }
  return v;
}

World make_world(const DatasetConfig& cfg, const HoiVocabulary& vocab, std::mt19937_64& rng) {
  World w;
  for (int c = 0; c < cfg.num_objects; ++c)
    w.category_centroid.push_back(gaussian_vec(cfg.appearance_dim, 1.0, rng));
  for (int a = 0; a < cfg.num_actions; ++a) {
    w.human_action_cue.push_back(gaussian_vec(cfg.appearance_dim, 1.0, rng));
    w.object_action_cue.push_back(gaussian_vec(cfg.appearance_dim, 1.0, rng));
    w.map_cue.push_back(gaussian_vec(cfg.map_dim, 1.0, rng));
    w.action_angle.push_back(std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng));
    w.action_distance.push_back(std::uniform_real_distribution<double>(0.3, 0.7)(rng));
  }
  // Zipf-like frequencies over a random ranking of HOI categories.
  std::vector<std::size_t> rank(vocab.hois.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);
  w.hoi_weight.resize(rank.size());
  for (std::size_t i = 0; i < rank.size(); ++i)
    w.hoi_weight[rank[i]] = 1.0 / std::pow(static_cast<double>(i + 1), 0.8);
  return w;
}

std::vector<Scene> make_split(const World& world, const HoiVocabulary& vocab,
                              const DatasetConfig& cfg, std::size_t count, std::uint64_t split,
                              const std::string& prefix) {
  std::vector<bool> shared(count, false);
  const auto n_shared = static_cast<std::size_t>(std::llround(cfg.shared_fraction * count));
  std::fill(shared.begin(), shared.begin() + n_shared, true);
  std::mt19937_64 shuffle_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + split);
  std::shuffle(shared.begin(), shared.end(), shuffle_rng);

  std::vector<Scene> scenes;
  scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(split), static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    char id[32];
    std::snprintf(id, sizeof id, "%s_%05zu", prefix.c_str(), i);
    scenes.push_back(SceneBuilder(world, vocab, cfg, rng).build(id, shared[i]));
  }
  return scenes;
}

void require_box(const Box& b, const Scene& s, const std::string& what) {
  if (!b.valid()) throw ValidationError(s.id + ": " + what + " has x1>=x2 or y1>=y2");
  if (b.x1 < 0 || b.y1 < 0 || b.x2 > s.width || b.y2 > s.height) {
    throw ValidationError(s.id + ": " + what + " lies outside the image");
  }
}

}  // namespace

Dataset generate_dataset(const DatasetConfig& config) {
  check_config(config);
  std::mt19937_64 rng(config.seed);
  Dataset ds;
  ds.vocab = make_vocabulary(config, rng);
  const World world = make_world(config, ds.vocab, rng);
  ds.train = make_split(world, ds.vocab, config, config.train_scenes, 1, "train");
  ds.test = make_split(world, ds.vocab, config, config.test_scenes, 2, "test");
  assign_rarity(ds.vocab, ds.train.empty() ? ds.test : ds.train);
  return ds;
}

std::vector<double> appearance_centroid(const DatasetConfig& config, int category, bool human,
                                        const std::vector<int>& cue_actions) {
  check_config(config);
  std::mt19937_64 rng(config.seed);
  const HoiVocabulary vocab = make_vocabulary(config, rng);
  const World world = make_world(config, vocab, rng);
  if (category < 0 || category >= config.num_objects) throw ConfigError("category out of range");
  Vec v = world.category_centroid[category];
  const auto& cues = human ? world.human_action_cue : world.object_action_cue;
  for (int a : std::set<int>(cue_actions.begin(), cue_actions.end())) {
    if (a < 0 || a >= config.num_actions) throw ConfigError("action out of range");
    for (std::size_t d = 0; d < v.size(); ++d) v[d] += cues[a][d];
  }
  return v;
}

void assign_rarity(HoiVocabulary& vocab, const std::vector<Scene>& scenes) {
  std::vector<std::size_t> counts(vocab.hois.size(), 0);
  for (const auto& s : scenes) {
    for (const auto& t : s.gt_triplets) {
      for (int a : t.actions) {
        if (auto idx = vocab.hoi_index(a, t.object_category)) ++counts[*idx];
      }
    }
  }
  std::vector<std::size_t> order(vocab.hois.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return counts[a] < counts[b]; });
  for (auto& h : vocab.hois) h.rare = false;
  for (std::size_t i = 0; i < vocab.hois.size() / 4; ++i) vocab.hois[order[i]].rare = true;
}

bool has_shared_instance(const Scene& scene) {
  const auto& t = scene.gt_triplets;
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = i + 1; j < t.size(); ++j) {
      if (t[i].human == t[j].human || t[i].object == t[j].object) return true;
    }
  }
  return false;
}

void validate_scene(const Scene& s, const HoiVocabulary* vocab) {
  if (!(s.width > 0) || !(s.height > 0)) throw ValidationError(s.id + ": non-positive image size");
  if (s.feature_map.rank() != 3) {
    throw ValidationError(s.id + ": feature map must be [Hf,Wf,d_map], got " +
                          shape_str(s.feature_map.shape()));
  }
  for (std::size_t i = 0; i < s.detections.size(); ++i) {
    const Detection& d = s.detections[i];
    const std::string what = "detection " + std::to_string(i);
    require_box(d.box, s, what);
    if (d.category < 0 || (vocab && d.category >= vocab->num_objects)) {
      throw ValidationError(s.id + ": " + what + " has category out of range");
    }
    if (d.is_human != (d.category == kPersonCategory)) {
      throw ValidationError(s.id + ": " + what + " human flag disagrees with category");
    }
    if (!(d.score >= 0.0 && d.score <= 1.0)) {
      throw ValidationError(s.id + ": " + what + " score outside [0,1]");
    }
    if (d.appearance.size() != s.appearance_dim) {
      throw ValidationError(s.id + ": " + what + " appearance length " +
                            std::to_string(d.appearance.size()) + " != " +
                            std::to_string(s.appearance_dim));
    }
  }
  for (std::size_t i = 0; i < s.gt_triplets.size(); ++i) {
    const GtTriplet& t = s.gt_triplets[i];
    const std::string what = "gt triplet " + std::to_string(i);
    require_box(t.human, s, what + " human box");
    require_box(t.object, s, what + " object box");
    if (t.actions.empty()) throw ValidationError(s.id + ": " + what + " has no actions");
    if (t.object_category < 0 || (vocab && t.object_category >= vocab->num_objects)) {
      throw ValidationError(s.id + ": " + what + " object category out of range");
    }
    for (int a : t.actions) {
      if (a < 0 || (vocab && a >= vocab->num_actions)) {
        throw ValidationError(s.id + ": " + what + " action out of range");
      }
      if (vocab && !vocab->hoi_index(a, t.object_category)) {
        throw ValidationError(s.id + ": " + what + " is not a vocabulary HOI");
      }
    }
  }
}

}  // namespace sctc
