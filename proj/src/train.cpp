#include "sctc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>

#include "sctc/error.hpp"
#include "sctc/optim.hpp"

namespace sctc {

namespace {

void check_finite(const LossValues& v, const std::string& scene_id, std::size_t epoch) {
  const std::pair<const char*, double> parts[] = {
      {"L_kd", v.kd}, {"L_pair", v.pair}, {"L_a", v.action}, {"total", v.total}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) {
      throw NumericalError(std::string("non-finite ") + name + " (" + std::to_string(value) +
                           ") in scene " + scene_id + " at epoch " + std::to_string(epoch));
    }
  }
}

}  // namespace

std::vector<EpochLosses> train_model(Model& model, std::span<const Scene> scenes,
                                     const HoiVocabulary& vocab, const TrainOptions& options,
                                     const EpochCallback& on_epoch) {
  if (options.epochs == 0) throw ConfigError("epochs must be at least 1");
  if (options.batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (!(options.base_lr > 0)) throw ConfigError("step size must be positive");

  const ModelConfig& cfg = model.config();
  AdamWConfig opt_cfg;
  opt_cfg.base_lr = options.base_lr;
  opt_cfg.weight_decay = options.weight_decay;
  opt_cfg.horizon = options.epochs;
  AdamW optimizer(model.params(), opt_cfg);
  model.params().zero_grad();

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochLosses> log;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLosses sums{epoch};
    std::size_t counted = 0;

    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);

      // Choose each scene's pairs first so the batch size used for averaging
      // is known before any gradient is accumulated.
      std::vector<std::vector<PairCandidate>> batch_pairs;
      std::vector<const Scene*> batch_scenes;
      for (std::size_t i = start; i < end; ++i) {
        const Scene& scene = scenes[order[i]];
        std::vector<PairCandidate> all = enumerate_pairs(scene);
        if (all.empty()) continue;
        std::vector<double> scores;
        if (epoch > 0) scores = model.score_pairs(scene, all);
        const auto keep = sample_training_pairs(all, cfg.hard_negative_ratio, scores, rng);
        if (keep.empty()) continue;
        std::vector<PairCandidate> subset;
        subset.reserve(keep.size());
        for (std::size_t k : keep) subset.push_back(std::move(all[k]));
        batch_pairs.push_back(std::move(subset));
        batch_scenes.push_back(&scene);
      }
      if (batch_scenes.empty()) continue;

      const double weight = 1.0 / static_cast<double>(batch_scenes.size());
      for (std::size_t b = 0; b < batch_scenes.size(); ++b) {
        Tape tape;
        SceneOutput out =
            model.forward(tape, *batch_scenes[b], vocab, std::move(batch_pairs[b]), true);
        check_finite(out.values, batch_scenes[b]->id, epoch);
        tape.backward(scale(*out.total, weight));
        sums.kd += out.values.kd;
        sums.pair += out.values.pair;
        sums.action += out.values.action;
        sums.total += out.values.total;
        ++counted;
      }
      optimizer.step(epoch);
    }

    if (counted > 0) {
      const double n = static_cast<double>(counted);
      sums.kd /= n;
      sums.pair /= n;
      sums.action /= n;
      sums.total /= n;
    }
    log.push_back(sums);
    if (on_epoch) on_epoch(sums);
  }
  return log;
}

std::size_t default_threads() {
  if (const char* env = std::getenv("SCTC_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
    throw ConfigError(std::string("SCTC_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

MapReport evaluate_model(const Model& model, std::span<const Scene> scenes,
                         const HoiVocabulary& vocab, std::size_t threads) {
  std::vector<std::vector<HoiPrediction>> results(scenes.size());
  threads = std::max<std::size_t>(1, std::min(threads, scenes.size()));

  auto work = [&](std::size_t first) {
    for (std::size_t i = first; i < scenes.size(); i += threads) {
      results[i] = model.predict(scenes[i], vocab);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  MapAccumulator acc(vocab);
  for (std::size_t i = 0; i < scenes.size(); ++i) acc.add_scene(results[i], scenes[i].gt_triplets);
  return acc.finish();
}

}  // namespace sctc
