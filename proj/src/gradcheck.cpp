#include "sctc/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "sctc/error.hpp"

namespace sctc {

bool GradcheckReport::passed() const {
  return std::all_of(groups.begin(), groups.end(), [](const GroupCheck& g) { return g.passed; });
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

Dataset gradcheck_dataset(std::uint64_t seed) {
  DatasetConfig cfg;
  cfg.seed = seed;
  cfg.train_scenes = 2;
  cfg.test_scenes = 0;
  cfg.max_extra_humans = 0;
  cfg.min_clutter_objects = 1;
  cfg.max_clutter_objects = 1;
  cfg.shared_fraction = 0.5;
  return generate_dataset(cfg);
}

double scenes_loss(const Model& model, std::span<const Scene> scenes, const HoiVocabulary& vocab,
                   bool backward) {
  double total = 0;
  for (const Scene& scene : scenes) {
    std::vector<PairCandidate> pairs = enumerate_pairs(scene);
    if (pairs.empty()) continue;
    if (pairs.size() > model.config().max_proposals) {
      throw ConfigError("gradcheck scene " + scene.id + " has more candidates than K");
    }
    Tape tape;
    const SceneOutput out = model.forward(tape, scene, vocab, std::move(pairs), true);
    total += out.values.total;
    if (backward) tape.backward(*out.total);
  }
  return total;
}

GradcheckReport run_gradcheck(Model& model, std::span<const Scene> scenes,
                              const HoiVocabulary& vocab, const GradcheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  ParameterStore& store = model.params();
  std::mt19937_64 rng(options.seed);
  if (options.perturb > 0) {
    std::normal_distribution<double> noise(0.0, options.perturb);
    for (const auto& p : store)
      for (auto& v : p->value.data()) v += noise(rng);
  }
  store.zero_grad();
  const double loss = scenes_loss(model, scenes, vocab, true);
  // Rounding error of the difference quotient at a given step.
  auto floor_at = [&](double step) {
    return std::max(options.floor, options.noise_margin * std::numeric_limits<double>::epsilon() *
                                       std::max(1.0, std::abs(loss)) / step);
  };

  GradcheckReport report;
  for (const auto& p : store) {
    GroupCheck check{p->name};
    const std::size_t n = p->value.size();

    std::vector<std::size_t> probe;
    if (n <= options.samples + 1) {
      probe.resize(n);
      for (std::size_t i = 0; i < n; ++i) probe[i] = i;
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t s = 0; s < options.samples; ++s) probe.push_back(pick(rng));
      std::size_t largest = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (std::abs(p->grad[i]) > std::abs(p->grad[largest])) largest = i;
      probe.push_back(largest);
    }

    const double factor = p->name == options.corrupt_group ? options.corrupt_factor : 1.0;
    for (std::size_t i : probe) {
      const double analytic = p->grad[i] * factor;
      // A relu kink inside [x-h, x+h] spoils the quotient; the smaller step
      // rarely straddles the same kink, so the better of the two is kept.
      double best = std::numeric_limits<double>::infinity();
      for (double step : {options.step, options.step / 10}) {
        const double saved = p->value[i];
        p->value[i] = saved + step;
        const double up = scenes_loss(model, scenes, vocab, false);
        p->value[i] = saved - step;
        const double down = scenes_loss(model, scenes, vocab, false);
        p->value[i] = saved;
        const double numeric = (up - down) / (2 * step);
        best = std::min(best, relative_error(analytic, numeric, floor_at(step)));
        if (best <= options.tolerance) break;
      }
      check.max_rel_error = std::max(check.max_rel_error, best);
      ++check.entries;
    }
    check.passed = check.max_rel_error <= options.tolerance;
    report.groups.push_back(std::move(check));
  }
  store.zero_grad();
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace sctc
