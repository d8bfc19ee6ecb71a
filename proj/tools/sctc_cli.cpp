// sctc: dataset generation, training, evaluation, gradient checks and
// ablations for the SCTC interaction head.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "sctc/ablation.hpp"
#include "sctc/error.hpp"
#include "sctc/gradcheck.hpp"
#include "sctc/io.hpp"
#include "sctc/model.hpp"
#include "sctc/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sctc;

namespace {

struct RunConfig {
  std::uint64_t seed = 42;
  std::string data;
  std::string out = "out";
  std::string checkpoint;
  std::string split = "test";
  std::size_t threads = 0;  // 0: SCTC_THREADS or 1

  // generation
  std::size_t scenes = 200;
  std::size_t test_scenes = 50;
  bool no_correlation = false;

  // model
  std::size_t k = 32;
  std::size_t layers = 6;
  double alpha = 1.0, beta = 1.0, gamma = 1.0;
  bool no_kd = false, no_sta = false, no_ctd = false, mlp_baseline = false;
  bool no_interactiveness_score = false;
  std::string edge = "IF+SF";
  std::string relations = "IR,SR,LR";
  std::string adj_norm = "softmax";

  // training
  std::size_t epochs = 10;
  std::size_t batch = 4;
  double lr = 1e-3;

  // ablation
  std::string table = "main";
  std::size_t repeats = 1;

  // gradcheck
  std::uint64_t grad_seed = 7;
  std::string corrupt;  // test hook
};

ModelConfig model_config(const RunConfig& rc) {
  ModelConfig c;
  c.max_proposals = rc.k;
  c.decoder.layers = rc.layers;
  c.alpha = rc.alpha;
  c.beta = rc.beta;
  c.gamma = rc.gamma;
  c.use_kd = !rc.no_kd;
  c.use_sta = !(rc.no_sta || rc.mlp_baseline);
  c.use_ctd = !(rc.no_ctd || rc.mlp_baseline);
  c.edge = parse_edge_content(rc.edge);
  c.relations = parse_relation_toggles(rc.relations);
  c.adjacency_norm = parse_adjacency_norm(rc.adj_norm);
  c.score_with_interactiveness = !rc.no_interactiveness_score;
  c.init_seed = rc.seed;
  if (rc.k == 0) throw ConfigError("-K must be at least 1");
  return c;
}

TrainOptions train_options(const RunConfig& rc) {
  TrainOptions t;
  t.epochs = rc.epochs;
  t.batch_size = rc.batch;
  t.base_lr = rc.lr;
  t.seed = rc.seed;
  return t;
}

std::size_t thread_count(const RunConfig& rc) {
  return rc.threads > 0 ? rc.threads : default_threads();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  write_file(path, text);
}

DatasetConfig dataset_config(const RunConfig& rc) {
  DatasetConfig d;
  d.seed = rc.seed;
  d.train_scenes = rc.scenes;
  d.test_scenes = rc.test_scenes;
  d.cross_triplet_correlation = !rc.no_correlation;
  return d;
}

json dataset_config_json(const DatasetConfig& d) {
  return {{"seed", d.seed},
          {"train_scenes", d.train_scenes},
          {"test_scenes", d.test_scenes},
          {"cross_triplet_correlation", d.cross_triplet_correlation}};
}

int cmd_gen(const RunConfig& rc) {
  if (rc.scenes == 0) throw ConfigError("--scenes must be at least 1");
  const DatasetConfig cfg = dataset_config(rc);
  const Dataset ds = generate_dataset(cfg);
  save_dataset(rc.out, ds, dataset_config_json(cfg));
  std::size_t train_gt = 0, test_gt = 0;
  for (const auto& s : ds.train) train_gt += s.gt_triplets.size();
  for (const auto& s : ds.test) test_gt += s.gt_triplets.size();
  std::size_t rare = 0;
  for (const auto& h : ds.vocab.hois) rare += h.rare;
  std::printf("wrote %s\n", rc.out.c_str());
  std::printf("train: %zu scenes, %zu gt triplets\n", ds.train.size(), train_gt);
  std::printf("test:  %zu scenes, %zu gt triplets\n", ds.test.size(), test_gt);
  std::printf("vocabulary: %zu HOI categories (%zu rare), %d objects, %d actions\n",
              ds.vocab.num_hois(), rare, ds.vocab.num_objects, ds.vocab.num_actions);
  return 0;
}

Dataset require_data(const RunConfig& rc) {
  if (rc.data.empty()) throw ConfigError("--data is required");
  return load_dataset(rc.data);
}

const std::vector<Scene>& pick_split(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "test") return ds.test;
  throw ConfigError("--split must be train or test");
}

std::string loss_csv_row(const EpochLosses& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.kd, e.pair, e.action,
                e.total);
  return buf;
}

int cmd_train(const RunConfig& rc) {
  const Dataset ds = require_data(rc);
  if (ds.train.empty()) throw ConfigError("dataset has no training scenes");
  ModelConfig cfg = model_config(rc);
  cfg.adapt_to(ds.vocab, ds.train.front());
  Model model(cfg);

  std::string csv = "epoch,L_kd,L_pair,L_a,total\n";
  train_model(model, ds.train, ds.vocab, train_options(rc), [&](const EpochLosses& e) {
    csv += loss_csv_row(e);
    std::printf("epoch %zu  L_kd %.4f  L_pair %.4f  L_a %.4f  total %.4f\n", e.epoch, e.kd,
                e.pair, e.action, e.total);
    std::fflush(stdout);
  });
  const fs::path out(rc.out);
  fs::create_directories(out);
  save_checkpoint(out / "checkpoint.sctc", model);
  write_text(out / "losses.csv", csv);
  std::printf("wrote %s and %s\n", (out / "checkpoint.sctc").c_str(), (out / "losses.csv").c_str());
  return 0;
}

void print_report(const MapReport& r) {
  auto show = [](const char* name, const std::optional<double>& v) {
    if (v) std::printf("%-9s %.4f\n", name, *v);
    else std::printf("%-9s n/a\n", name);
  };
  show("full", r.full);
  show("rare", r.rare);
  show("non_rare", r.non_rare);
}

int cmd_eval(const RunConfig& rc) {
  if (rc.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const Dataset ds = require_data(rc);
  const auto& scenes = pick_split(ds, rc.split);
  const Model model = load_checkpoint(rc.checkpoint);
  if (!scenes.empty()) model.check_compatible(ds.vocab, scenes.front());
  const MapReport report = evaluate_model(model, scenes, ds.vocab, thread_count(rc));
  const fs::path path = fs::path(rc.out) / "metrics.json";
  write_text(path, to_json(report).dump(2) + "\n");
  print_report(report);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int cmd_gradcheck(const RunConfig& rc) {
  const Dataset ds = gradcheck_dataset(rc.grad_seed);
  ModelConfig cfg = model_config(rc);
  cfg.init_seed = rc.grad_seed;
  cfg.adapt_to(ds.vocab, ds.train.front());
  Model model(cfg);
  GradcheckOptions opts;
  opts.seed = rc.grad_seed;
  opts.corrupt_group = rc.corrupt;
  const GradcheckReport report = run_gradcheck(model, ds.train, ds.vocab, opts);
  for (const auto& g : report.groups) {
    std::printf("%-4s %-44s entries %3zu  max rel err %.3e\n", g.passed ? "ok" : "FAIL",
                g.name.c_str(), g.entries, g.max_rel_error);
  }
  std::printf("%zu groups, %s, %.2f s\n", report.groups.size(),
              report.passed() ? "all passed" : "FAILED", report.seconds);
  return report.passed() ? 0 : 3;
}

int cmd_ablate(const RunConfig& rc) {
  Dataset ds;
  if (rc.data.empty()) {
    ds = generate_dataset(dataset_config(rc));
  } else {
    ds = load_dataset(rc.data);
  }
  if (ds.train.empty() || ds.test.empty()) throw ConfigError("ablation needs train and test scenes");
  if (rc.repeats == 0) throw ConfigError("--repeats must be at least 1");
  ModelConfig base = model_config(rc);
  base.adapt_to(ds.vocab, ds.train.front());
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < rc.repeats; ++i) seeds.push_back(rc.seed + i);
  const auto rows =
      run_ablation(ablation_arms(rc.table), ds, base, train_options(rc), seeds, thread_count(rc));
  const std::string csv = ablation_csv(rows);
  const fs::path path = fs::path(rc.out) / ("ablation_" + rc.table + ".csv");
  write_text(path, csv);
  std::fputs(csv.c_str(), stdout);
  return 0;
}

void add_model_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("-K,--proposals", rc.k, "Top-K proposals kept per scene");
  cmd->add_option("--layers", rc.layers, "Decoder layers");
  cmd->add_option("--alpha", rc.alpha, "Weight of L_kd");
  cmd->add_option("--beta", rc.beta, "Weight of L_pair");
  cmd->add_option("--gamma", rc.gamma, "Weight of L_a");
  cmd->add_flag("--no-kd", rc.no_kd, "Disable distillation");
  cmd->add_flag("--no-sta", rc.no_sta, "Replace STA with MLP fusion");
  cmd->add_flag("--no-ctd", rc.no_ctd, "Disable the cross-triplet graph");
  cmd->add_flag("--mlp-baseline", rc.mlp_baseline, "MLP fusion, no STA and no CTD");
  cmd->add_flag("--no-interactiveness-score", rc.no_interactiveness_score,
                "Drop p_hat from the composite score");
  cmd->add_option("--edge", rc.edge, "STA edge content: IF+SF, IF, SF, LE");
  cmd->add_option("--relations", rc.relations, "CTD relations: IR,SR,LR subset or LE");
  cmd->add_option("--adj-norm", rc.adj_norm, "Adjacency normalization: softmax, sigmoid, raw");
}

void add_train_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--epochs", rc.epochs, "Training epochs");
  cmd->add_option("--batch", rc.batch, "Scenes per optimizer step");
  cmd->add_option("--lr", rc.lr, "Base step size");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SCTC human-object interaction head on synthetic detections"};
  app.require_subcommand(1);
  RunConfig rc;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("--seed", rc.seed, "Generator seed");
  gen->add_option("--scenes", rc.scenes, "Training scenes");
  gen->add_option("--test-scenes", rc.test_scenes, "Test scenes");
  gen->add_flag("--no-correlation", rc.no_correlation, "Disable cross-triplet correlations");
  gen->add_option("--out", rc.out, "Output directory");

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train->add_option("--data", rc.data, "Dataset directory")->required();
  train->add_option("--seed", rc.seed, "Initialization and shuffling seed");
  train->add_option("--out", rc.out, "Output directory");
  add_model_flags(train, rc);
  add_train_flags(train, rc);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", rc.checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", rc.data, "Dataset directory")->required();
  eval->add_option("--split", rc.split, "train or test");
  eval->add_option("--threads", rc.threads, "Worker threads (default SCTC_THREADS or 1)");
  eval->add_option("--out", rc.out, "Output directory");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every parameter group");
  grad->add_option("--seed", rc.grad_seed, "Seed for the micro dataset, init and probes");
  grad->add_option("--corrupt", rc.corrupt, "Scale one group's analytic gradient (self-test)")
      ->group("");
  add_model_flags(grad, rc);

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate one ablation table");
  ablate->add_option("--table", rc.table, "main, edge or relation");
  ablate->add_option("--data", rc.data, "Dataset directory (generated from --seed if absent)");
  ablate->add_option("--seed", rc.seed, "Seed shared by every arm");
  ablate->add_option("--repeats", rc.repeats, "Seeds averaged per arm (seed, seed+1, ...)");
  ablate->add_option("--threads", rc.threads, "Evaluation threads");
  ablate->add_option("--out", rc.out, "Output directory");
  add_model_flags(ablate, rc);
  add_train_flags(ablate, rc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen(rc);
    if (*train) return cmd_train(rc);
    if (*eval) return cmd_eval(rc);
    if (*grad) return cmd_gradcheck(rc);
    if (*ablate) return cmd_ablate(rc);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 1;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
