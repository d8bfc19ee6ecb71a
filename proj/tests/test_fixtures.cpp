#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "sctc/error.hpp"
#include "sctc/fixtures.hpp"
#include "sctc/geometry.hpp"
#include "sctc/io.hpp"

using namespace sctc;
namespace fs = std::filesystem;

namespace {

DatasetConfig small_config(std::uint64_t seed = 42) {
  DatasetConfig c;
  c.seed = seed;
  c.train_scenes = 12;
  c.test_scenes = 4;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("sctc_test_fixtures_" + name);
  fs::remove_all(p);
  return p;
}

std::span<const char> bytes_of(const std::string& s) { return {s.data(), s.size()}; }

}  // namespace

TEST_CASE("same seed gives byte-identical datasets") {
  const Dataset a = generate_dataset(small_config());
  const Dataset b = generate_dataset(small_config());
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i)
    CHECK(encode_scene(a.train[i]) == encode_scene(b.train[i]));
  CHECK(encode_vocabulary(a.vocab) == encode_vocabulary(b.vocab));

  const fs::path d1 = scratch_dir("det1"), d2 = scratch_dir("det2");
  save_dataset(d1, a);
  save_dataset(d2, b);
  for (const auto& entry : fs::recursive_directory_iterator(d1)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), d1);
    CHECK(read_file(entry.path()) == read_file(d2 / rel));
  }
  fs::remove_all(d1);
  fs::remove_all(d2);

  const Dataset c = generate_dataset(small_config(43));
  CHECK(encode_scene(c.train[0]) != encode_scene(a.train[0]));
}

TEST_CASE("zero appearance noise puts every detection on its cluster centroid") {
  DatasetConfig cfg = small_config(5);
  cfg.appearance_noise = 0.0;
  cfg.decoy_cue_prob = 0.0;
  cfg.cross_triplet_correlation = false;  // every triplet carries its cues
  cfg.train_scenes = 30;
  const Dataset ds = generate_dataset(cfg);
  std::size_t checked = 0;
  for (const Scene& s : ds.train) {
    for (const Detection& d : s.detections) {
      // Recover which gt instance (if any) the detection was jittered from.
      const GtTriplet* best = nullptr;
      double best_iou = 0;
      bool as_human = false;
      for (const auto& t : s.gt_triplets) {
        const Box& b = d.is_human ? t.human : t.object;
        if (!d.is_human && t.object_category != d.category) continue;
        const double v = iou(d.box, b);
        if (v > best_iou) best_iou = v, best = &t, as_human = d.is_human;
      }
      std::set<int> cues;
      if (best && best_iou >= cfg.min_detection_iou) {
        const Box& truth = as_human ? best->human : best->object;
        for (const auto& t : s.gt_triplets)
          if ((as_human ? t.human : t.object) == truth) cues.insert(t.actions.begin(), t.actions.end());
      }
      const auto centroid = appearance_centroid(cfg, d.category, d.is_human,
                                                std::vector<int>(cues.begin(), cues.end()));
      REQUIRE(centroid.size() == d.appearance.size());
      for (std::size_t k = 0; k < centroid.size(); ++k)
        CHECK(d.appearance[k] == static_cast<double>(static_cast<float>(centroid[k])));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("shared-instance fraction matches the configuration over 1000 scenes") {
  for (double fraction : {0.0, 0.2, 0.35, 0.5, 1.0}) {
    CAPTURE(fraction);
    DatasetConfig cfg;
    cfg.seed = 11;
    cfg.train_scenes = 1000;
    cfg.test_scenes = 0;
    cfg.shared_fraction = fraction;
    const Dataset ds = generate_dataset(cfg);
    std::size_t shared = 0;
    for (const Scene& s : ds.train) shared += has_shared_instance(s) ? 1 : 0;
    CHECK(std::abs(static_cast<double>(shared) / 1000.0 - fraction) <= 0.02);
  }
}

TEST_CASE("generated scenes are self-consistent") {
  const Dataset ds = generate_dataset(small_config(3));
  for (const Scene& s : ds.train) {
    CHECK_NOTHROW(validate_scene(s, &ds.vocab));
    CHECK(s.feature_map.shape() == Shape{8, 8, 64});
    for (const auto& t : s.gt_triplets) {
      REQUIRE_FALSE(t.actions.empty());
      for (int a : t.actions) CHECK(ds.vocab.hoi_index(a, t.object_category).has_value());
      double h_best = 0, o_best = 0;
      for (const Detection& d : s.detections) {
        if (d.is_human) h_best = std::max(h_best, iou(d.box, t.human));
        if (d.category == t.object_category && !d.is_human) o_best = std::max(o_best, iou(d.box, t.object));
      }
      CHECK(h_best >= 0.7);
      CHECK(o_best >= 0.7);
    }
    for (const Detection& d : s.detections) {
      CHECK(d.score >= 0.8);
      CHECK(d.score <= 1.0);
    }
  }
}

TEST_CASE("vocabulary has one unit-norm embedding per key") {
  const Dataset ds = generate_dataset(small_config());
  const HoiVocabulary& v = ds.vocab;
  CHECK(v.text_embeddings.rows() == v.num_hois() + static_cast<std::size_t>(v.num_objects));
  for (std::size_t r = 0; r < v.text_embeddings.rows(); ++r) {
    double n = 0;
    for (std::size_t k = 0; k < v.embedding_dim(); ++k) n += v.text_embeddings.at(r, k) * v.text_embeddings.at(r, k);
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
  }
  std::set<std::pair<int, int>> keys;
  for (const auto& h : v.hois) CHECK(keys.insert({h.action, h.object}).second);
  for (const auto& h : v.hois) CHECK(h.object != kPersonCategory);
}

TEST_CASE("rarity flags mark the bottom quartile by instance count") {
  const Dataset ds = generate_dataset(small_config());
  std::map<std::size_t, std::size_t> counts;
  for (const Scene& s : ds.train)
    for (const auto& t : s.gt_triplets)
      for (int a : t.actions) ++counts[*ds.vocab.hoi_index(a, t.object_category)];
  std::size_t rare = 0, max_rare = 0, min_common = SIZE_MAX;
  for (std::size_t i = 0; i < ds.vocab.num_hois(); ++i) {
    const std::size_t c = counts.count(i) ? counts[i] : 0;
    if (ds.vocab.hois[i].rare) {
      ++rare;
      max_rare = std::max(max_rare, c);
    } else {
      min_common = std::min(min_common, c);
    }
  }
  CHECK(rare == ds.vocab.num_hois() / 4);
  CHECK(max_rare <= min_common);
}

TEST_CASE("degenerate configurations are rejected") {
  DatasetConfig c = small_config();
  c.train_scenes = 0;
  c.test_scenes = 0;
  CHECK_THROWS_AS(generate_dataset(c), ConfigError);
  c = small_config();
  c.num_objects = 1;
  CHECK_THROWS_AS(generate_dataset(c), ConfigError);
  c = small_config();
  c.num_actions = 1;
  CHECK_THROWS_AS(generate_dataset(c), ConfigError);
  c = small_config();
  c.hoi_table = {{0, 0}};  // person is not an object
  CHECK_THROWS_AS(generate_dataset(c), ConfigError);
  c = small_config();
  c.shared_fraction = 1.5;
  CHECK_THROWS_AS(generate_dataset(c), ConfigError);
}

TEST_CASE("explicit HOI table is used as given") {
  DatasetConfig c = small_config();
  c.num_objects = 3;
  c.num_actions = 2;
  c.hoi_table = {{0, 1}, {1, 1}, {1, 2}};
  const Dataset ds = generate_dataset(c);
  REQUIRE(ds.vocab.num_hois() == 3);
  CHECK(ds.vocab.actions_for_object(1) == std::vector<int>{0, 1});
  CHECK(ds.vocab.actions_for_object(2) == std::vector<int>{1});
}

TEST_CASE("scene and vocabulary round trips") {
  const Dataset ds = generate_dataset(small_config());
  for (const Scene& s : ds.train) {
    const std::string bytes = encode_scene(s);
    CHECK(decode_scene(bytes_of(bytes)) == s);
  }
  const std::string vb = encode_vocabulary(ds.vocab);
  CHECK(decode_vocabulary(bytes_of(vb)) == ds.vocab);

  const fs::path dir = scratch_dir("rt");
  fs::create_directories(dir);
  save_scene(dir / "s.sctc", ds.test[0]);
  CHECK(load_scene(dir / "s.sctc") == ds.test[0]);
  fs::remove_all(dir);
}

TEST_CASE("blob round trip keeps f64 exactly and f32 to float precision") {
  const Tensor t({2, 3}, {0.1, -2.5, 3e10, 1.0 / 3.0, 0.0, -1e-30});
  for (DType dt : {DType::kF32, DType::kF64}) {
    std::ostringstream out;
    write_blob(out, t, dt);
    const std::string s = out.str();
    std::size_t offset = 0;
    const Tensor back = read_blob(bytes_of(s), offset, "t");
    CHECK(offset == s.size());
    REQUIRE(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double want = dt == DType::kF64 ? t[i] : static_cast<double>(static_cast<float>(t[i]));
      CHECK(back[i] == want);
    }
  }
}

TEST_CASE("truncated tensor payload is a parse error naming the field") {
  const Dataset ds = generate_dataset(small_config());
  std::string bytes = encode_scene(ds.train[0]);
  bytes.resize(bytes.size() - 10);
  try {
    decode_scene(bytes_of(bytes));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("feature_map") != std::string::npos);
    CHECK(e.offset() > 0);
    CHECK(e.offset() <= bytes.size());
  }
}

TEST_CASE("malformed headers are parse errors with offsets") {
  CHECK_THROWS_AS(decode_scene(bytes_of("no newline here")), ParseError);
  CHECK_THROWS_AS(decode_scene(bytes_of("{\"format\": \n")), ParseError);
  CHECK_THROWS_AS(decode_scene(bytes_of("{\"format\":\"sctc-scene\"}\n")), ParseError);

  const Dataset ds = generate_dataset(small_config());
  std::string bytes = encode_scene(ds.train[0]);
  const std::size_t header_end = bytes.find('\n') + 1;
  bytes[header_end] = 'X';  // break the first blob's magic
  try {
    decode_scene(bytes_of(bytes));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == header_end);
    CHECK(std::string(e.what()).find("appearance") != std::string::npos);
  }
}

TEST_CASE("inverted box is a validation error") {
  Scene s = generate_dataset(small_config()).train[0];
  std::swap(s.detections[0].box.x1, s.detections[0].box.x2);
  const std::string bytes = encode_scene(s);
  CHECK_THROWS_AS(decode_scene(bytes_of(bytes)), ValidationError);

  Scene t = generate_dataset(small_config()).train[0];
  t.gt_triplets[0].object.x2 = t.width + 5;
  CHECK_THROWS_AS(validate_scene(t), ValidationError);
}

TEST_CASE("dataset manifest declares the generated gt count") {
  const Dataset ds = generate_dataset(small_config());
  const fs::path dir = scratch_dir("manifest");
  save_dataset(dir, ds);
  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  for (const auto& [split, scenes] : {std::pair{"train", &ds.train}, std::pair{"test", &ds.test}}) {
    std::size_t gt = 0;
    for (const Scene& s : *scenes) gt += s.gt_triplets.size();
    CHECK(manifest[split]["num_gt_triplets"].get<std::size_t>() == gt);
    CHECK(manifest[split]["num_scenes"].get<std::size_t>() == scenes->size());
  }
  const Dataset back = load_dataset(dir);
  CHECK(back.train == ds.train);
  CHECK(back.test == ds.test);
  CHECK(back.vocab == ds.vocab);
  fs::remove_all(dir);
  CHECK_THROWS_AS(load_dataset(dir), IoError);
}
