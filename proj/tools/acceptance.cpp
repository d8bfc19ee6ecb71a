// sctc_acceptance: runs the six acceptance checks and prints one PASS/FAIL
// line per criterion. Criterion 5 trains fifteen models and dominates the
// runtime (about 12 minutes on one core).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <sys/wait.h>

#include "CLI11.hpp"
#include "sctc/ablation.hpp"
#include "sctc/gradcheck.hpp"
#include "sctc/model.hpp"
#include "sctc/train.hpp"

using namespace sctc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

bool run_test_binary(const std::string& name, const std::string& filter = "") {
  std::string cmd = std::string(SCTC_TEST_DIR) + "/" + name;
  if (!filter.empty()) cmd += " '--test-case=" + filter + "'";
  cmd += " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

ModelConfig default_model(const Dataset& ds, std::uint64_t seed) {
  ModelConfig c;
  c.init_seed = seed;
  c.adapt_to(ds.vocab, ds.train.front());
  return c;
}

TrainOptions default_training(std::uint64_t seed) {
  TrainOptions t;
  t.seed = seed;
  return t;
}

double full_map(const MapReport& r) { return r.full.value_or(0.0); }

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const Dataset ds = gradcheck_dataset(7);
  ModelConfig cfg = default_model(ds, 7);
  Model model(cfg);
  const GradcheckReport report = run_gradcheck(model, ds.train, ds.vocab);
  const double secs = seconds_since(t0);
  double worst = 0;
  std::size_t failed = 0;
  for (const auto& g : report.groups) {
    worst = std::max(worst, g.max_rel_error);
    failed += !g.passed;
  }
  Outcome o;
  o.pass = report.passed() && secs < 60;
  o.detail = std::to_string(report.groups.size()) + " groups, " + std::to_string(failed) +
             " failed, worst " + fmt("%.2e", worst) + " (<= 1e-4), " + fmt("%.1f", secs) + " s (< 60 s)";
  return o;
}

Outcome oracle_suite() {
  const auto t0 = Clock::now();
  std::string failed;
  for (const char* name : {"test_numerics", "test_interaction", "test_distill", "test_sta", "test_ctd",
                           "test_decoder", "test_evaluation"}) {
    if (!run_test_binary(name)) failed += std::string(" ") + name;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = failed.empty() && secs < 30;
  o.detail = (failed.empty() ? std::string("all oracle tests passed") : "failed:" + failed) + ", " +
             fmt("%.1f", secs) + " s (< 30 s)";
  return o;
}

Outcome invariant_suite() {
  const std::pair<const char*, const char*> checks[] = {
      {"test_sta", "zeroed edge gate*"},
      {"test_sta", "pair outputs do not depend*"},
      {"test_ctd", "relations match double-loop*"},
      {"test_ctd", "softmax adjacency rows*"},
      {"test_ctd", "CTD is equivariant*"},
      {"test_evaluation", "mAP is invariant under monotone*"},
  };
  std::string failed;
  for (const auto& [bin, filter] : checks)
    if (!run_test_binary(bin, filter)) failed += std::string(" [") + filter + "]";
  Outcome o;
  o.pass = failed.empty();
  o.detail = failed.empty() ? "skip identity, pair independence, relation symmetry, row sums, "
                              "permutation equivariance, rescaling invariance hold"
                            : "failed:" + failed;
  return o;
}

struct EndToEnd {
  std::string checkpoint;
  std::string metrics;
  std::vector<EpochLosses> losses;
  double untrained = 0;
  double trained = 0;
  double seconds = 0;
};

EndToEnd end_to_end_run() {
  const auto t0 = Clock::now();
  const Dataset ds = generate_dataset(DatasetConfig{});
  Model model(default_model(ds, 42));
  EndToEnd r;
  r.untrained = full_map(evaluate_model(model, ds.test, ds.vocab));
  r.losses = train_model(model, ds.train, ds.vocab, default_training(42));
  const MapReport report = evaluate_model(model, ds.test, ds.vocab);
  r.trained = full_map(report);
  r.metrics = to_json(report).dump();
  r.checkpoint = encode_checkpoint(model);
  r.seconds = seconds_since(t0);
  return r;
}

Outcome end_to_end(const EndToEnd& r) {
  Outcome o;
  o.pass = r.trained >= 0.60 && r.untrained < 0.10 && r.seconds < 600;
  o.detail = "test mAP " + fmt("%.4f", r.trained) + " (>= 0.60), untrained " + fmt("%.4f", r.untrained) +
             " (< 0.10), " + fmt("%.1f", r.seconds) + " s (< 600 s)";
  return o;
}

Outcome ablation_direction() {
  const Dataset ds = generate_dataset(DatasetConfig{});  // correlations on by default
  const ModelConfig base = default_model(ds, 42);
  const auto rows = run_ablation(ablation_arms("main"), ds, base, default_training(42), {42, 43, 44});
  auto get = [&](const std::string& arm) {
    for (const auto& r : rows)
      if (r.arm == arm) return r.full.value_or(0.0);
    return 0.0;
  };
  const double mlp = get("MLP"), kd = get("KD+MLP"), sta = get("KD+STA"), full = get("KD+STA+CTD");
  Outcome o;
  o.pass = mlp <= kd && kd <= sta && sta <= full && full - mlp >= 0.03;
  o.detail = "MLP " + fmt("%.4f", mlp) + " <= KD " + fmt("%.4f", kd) + " <= KD+STA " + fmt("%.4f", sta) +
             " <= full " + fmt("%.4f", full) + ", margin " + fmt("%.4f", full - mlp) + " (>= 0.03)";
  return o;
}

Outcome determinism(const EndToEnd& a, const EndToEnd& b) {
  bool same_losses = a.losses.size() == b.losses.size();
  for (std::size_t i = 0; same_losses && i < a.losses.size(); ++i)
    same_losses = a.losses[i].total == b.losses[i].total && a.losses[i].kd == b.losses[i].kd &&
                  a.losses[i].pair == b.losses[i].pair && a.losses[i].action == b.losses[i].action;
  Outcome o;
  o.pass = a.checkpoint == b.checkpoint && a.metrics == b.metrics && same_losses;
  o.detail = std::string("checkpoints ") + (a.checkpoint == b.checkpoint ? "identical" : "differ") +
             ", metrics " + (a.metrics == b.metrics ? "identical" : "differ") + ", losses " +
             (same_losses ? "identical" : "differ");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks for the SCTC head"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria (1-6)")->check(CLI::Range(1, 6));
  CLI11_PARSE(app, argc, argv);
  const std::set<int> want = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6}
                                          : std::set<int>(only.begin(), only.end());

  bool all = true;
  auto report = [&](int n, const char* name, const Outcome& o) {
    std::printf("criterion %d %-22s %s  %s\n", n, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  };

  if (want.count(1)) report(1, "gradient suite", gradient_suite());
  if (want.count(2)) report(2, "oracle suite", oracle_suite());
  if (want.count(3)) report(3, "invariant suite", invariant_suite());
  if (want.count(4) || want.count(6)) {
    const EndToEnd first = end_to_end_run();
    if (want.count(4)) report(4, "end-to-end learning", end_to_end(first));
    if (want.count(6)) report(6, "determinism", determinism(first, end_to_end_run()));
  }
  if (want.count(5)) report(5, "ablation direction", ablation_direction());
  return all ? 0 : 1;
}
