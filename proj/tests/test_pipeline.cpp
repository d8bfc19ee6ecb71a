#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <string>

#include "sctc/error.hpp"
#include "sctc/gradcheck.hpp"
#include "sctc/io.hpp"
#include "sctc/model.hpp"
#include "sctc/train.hpp"

using namespace sctc;
namespace fs = std::filesystem;

namespace {

DatasetConfig small_data(std::uint64_t seed = 5) {
  DatasetConfig d;
  d.seed = seed;
  d.train_scenes = 6;
  d.test_scenes = 4;
  d.appearance_dim = 8;
  d.map_dim = 16;
  d.map_height = d.map_width = 4;
  d.text_dim = 16;
  return d;
}

ModelConfig small_model(const Dataset& ds, std::uint64_t seed = 3) {
  ModelConfig c;
  c.init_seed = seed;
  c.max_proposals = 8;
  c.decoder = {16, 2, 32, 1};
  c.ctd = {4, 4, 4, 8};
  c.adapt_to(ds.vocab, ds.train.front());
  return c;
}

TrainOptions short_training(std::uint64_t seed = 1) {
  TrainOptions t;
  t.epochs = 2;
  t.batch_size = 2;
  t.seed = seed;
  return t;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sctc_test_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SCTC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool same_predictions(const std::vector<HoiPrediction>& a, const std::vector<HoiPrediction>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].score != b[i].score || a[i].hoi != b[i].hoi || a[i].proposal != b[i].proposal) return false;
  return true;
}

}  // namespace

TEST_CASE("checkpoint round trip is exact") {
  const Dataset ds = generate_dataset(small_data());
  Model model(small_model(ds));
  train_model(model, ds.train, ds.vocab, short_training());
  const std::string bytes = encode_checkpoint(model);
  const Model back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  for (const Scene& s : ds.test) CHECK(same_predictions(model.predict(s, ds.vocab), back.predict(s, ds.vocab)));

  const fs::path dir = scratch("ckpt");
  save_checkpoint(dir / "m.sctc", model);
  CHECK(encode_checkpoint(load_checkpoint(dir / "m.sctc")) == bytes);

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.sctc"), IoError);
  CHECK_THROWS_AS(decode_checkpoint(std::string("not a checkpoint")), IoError);
  CHECK_THROWS_AS(decode_checkpoint(std::string_view(bytes).substr(0, bytes.size() / 2)), IoError);
}

TEST_CASE("checkpoint against data of another width is a load error") {
  const Dataset ds = generate_dataset(small_data());
  const Model model(small_model(ds));
  DatasetConfig other = small_data();
  other.appearance_dim = 12;
  const Dataset wide = generate_dataset(other);
  CHECK_NOTHROW(model.check_compatible(ds.vocab, ds.test.front()));
  CHECK_THROWS_AS(model.check_compatible(wide.vocab, wide.test.front()), LoadError);
}

TEST_CASE("a CTD whose adjacency is zero changes nothing") {
  const Dataset ds = generate_dataset(small_data());
  ModelConfig on = small_model(ds);
  on.adjacency_norm = AdjacencyNorm::kRaw;
  ModelConfig off = on;
  off.use_ctd = false;
  Model with(on);
  const Model without(off);
  const Linear& last = with.ctd_params().fusion.layers.back();
  for (auto& v : last.weight->value.data()) v = 0;
  for (auto& v : last.bias->value.data()) v = 0;
  for (const Scene& s : ds.test) {
    const auto pairs = enumerate_pairs(s);
    Tape t1, t2;
    const Tensor a = with.forward(t1, s, ds.vocab, pairs, false).action_probs;
    const Tensor b = without.forward(t2, s, ds.vocab, pairs, false).action_probs;
    CHECK(a == b);
  }
}

TEST_CASE("gradient check passes on a small model and catches a corrupted group") {
  const Dataset ds = gradcheck_dataset(7);
  ModelConfig cfg;
  cfg.init_seed = 7;
  cfg.decoder = {16, 2, 32, 1};
  cfg.ctd = {4, 4, 4, 8};
  cfg.adapt_to(ds.vocab, ds.train.front());

  Model model(cfg);
  const GradcheckReport report = run_gradcheck(model, ds.train, ds.vocab);
  REQUIRE(report.groups.size() == model.params().size());
  CHECK(report.groups.size() >= 20);
  std::size_t i = 0;
  for (const auto& p : model.params()) {
    CHECK(report.groups[i].name == p->name);
    CHECK_MESSAGE(report.groups[i].passed, report.groups[i].name, " ", report.groups[i].max_rel_error);
    ++i;
  }
  CHECK(report.passed());

  Model again(cfg);
  GradcheckOptions opts;
  opts.corrupt_group = report.groups[2].name;
  const GradcheckReport bad = run_gradcheck(again, ds.train, ds.vocab, opts);
  CHECK_FALSE(bad.passed());
  for (const auto& g : bad.groups) CHECK(g.passed == (g.name != opts.corrupt_group));
}

TEST_CASE("training is deterministic and logs consistent losses") {
  const Dataset ds = generate_dataset(small_data());
  ModelConfig cfg = small_model(ds);
  cfg.alpha = 0.5;
  cfg.beta = 2.0;
  cfg.gamma = 0.7;
  Model a(cfg), b(cfg);
  const auto la = train_model(a, ds.train, ds.vocab, short_training());
  const auto lb = train_model(b, ds.train, ds.vocab, short_training());
  CHECK(encode_checkpoint(a) == encode_checkpoint(b));
  REQUIRE(la.size() == 2);
  for (std::size_t e = 0; e < la.size(); ++e) {
    CHECK(la[e].total == lb[e].total);
    CHECK(la[e].kd > 0);
    CHECK(la[e].total == doctest::Approx(0.5 * la[e].kd + 2.0 * la[e].pair + 0.7 * la[e].action).epsilon(1e-12));
  }
  // Training moved the parameters.
  CHECK(encode_checkpoint(a) != encode_checkpoint(Model(cfg)));
}

TEST_CASE("without distillation the kd column is zero") {
  const Dataset ds = generate_dataset(small_data());
  ModelConfig cfg = small_model(ds);
  cfg.use_kd = false;
  Model model(cfg);
  for (const auto& e : train_model(model, ds.train, ds.vocab, short_training())) {
    CHECK(e.kd == 0);
    CHECK(e.total == doctest::Approx(e.pair + e.action).epsilon(1e-12));
  }
}

TEST_CASE("a non-finite parameter stops training with the failing loss named") {
  const Dataset ds = generate_dataset(small_data());
  Model model(small_model(ds));
  model.decoder_params().classifier.weight->value[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train_model(model, ds.train, ds.vocab, short_training());
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("L_a") != std::string::npos);
  }
}

TEST_CASE("evaluation does not depend on the thread count") {
  DatasetConfig dc = small_data();
  dc.test_scenes = 9;
  const Dataset ds = generate_dataset(dc);
  Model model(small_model(ds));
  train_model(model, ds.train, ds.vocab, short_training());
  const MapReport one = evaluate_model(model, ds.test, ds.vocab, 1);
  const MapReport three = evaluate_model(model, ds.test, ds.vocab, 3);
  CHECK(one.full == three.full);
  CHECK(one.rare == three.rare);
  CHECK(one.non_rare == three.non_rare);
  CHECK(to_json(one).dump() == to_json(three).dump());
}

TEST_CASE("command line exit codes and outputs") {
  const fs::path dir = scratch("cli");
  const std::string d = dir.string();
  CHECK(run_cli("gen --scenes 0 --out " + d + "/none") == 1);
  CHECK(run_cli("gen --no-such-flag") == 1);
  CHECK(run_cli("gen --scenes 4 --test-scenes 2 --seed 9 --out " + d + "/a") == 0);
  CHECK(run_cli("gen --scenes 4 --test-scenes 2 --seed 9 --out " + d + "/b") == 0);
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path twin = dir / "b" / fs::relative(entry.path(), dir / "a");
    CHECK(read_file(entry.path()) == read_file(twin));
  }
  const Dataset ds = load_dataset(dir / "a");
  CHECK(ds.train.size() == 4);
  CHECK(ds.test.size() == 2);

  CHECK(run_cli("eval --data " + d + "/a --checkpoint " + d + "/missing.sctc --out " + d + "/e") == 2);
  CHECK(run_cli("train --data " + d + "/missing --out " + d + "/t") == 2);
  CHECK(run_cli("train --data " + d + "/a --epochs 1 -K 8 --layers 1 --out " + d + "/t") == 0);
  CHECK(fs::exists(dir / "t" / "losses.csv"));
  CHECK(run_cli("eval --data " + d + "/a --checkpoint " + d + "/t/checkpoint.sctc --out " + d + "/e") == 0);
  CHECK(fs::exists(dir / "e" / "metrics.json"));
  fs::remove_all(dir);
}
