#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sctc/evaluation.hpp"
#include "sctc/model.hpp"

namespace sctc {

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 4;
  double base_lr = 1e-3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;  // scene order and random negatives
};

// Per-epoch means over the scenes that contributed a loss.
struct EpochLosses {
  std::size_t epoch = 0;
  double kd = 0;
  double pair = 0;
  double action = 0;
  double total = 0;
};

using EpochCallback = std::function<void(const EpochLosses&)>;

// Epoch 0 mines negatives at random; later epochs keep the negatives the
// current model scores highest. Gradients of a batch are averaged over its
// non-empty scenes. Throws NumericalError naming the first non-finite loss.
std::vector<EpochLosses> train_model(Model& model, std::span<const Scene> scenes,
                                     const HoiVocabulary& vocab, const TrainOptions& options,
                                     const EpochCallback& on_epoch = {});

// Thread count from SCTC_THREADS, else 1.
std::size_t default_threads();

// Predictions are computed in parallel and folded in scene order, so the
// report does not depend on the thread count.
MapReport evaluate_model(const Model& model, std::span<const Scene> scenes,
                         const HoiVocabulary& vocab, std::size_t threads = 1);

}  // namespace sctc
