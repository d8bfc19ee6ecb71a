#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sctc/model.hpp"
#include "sctc/train.hpp"

namespace sctc {

struct AblationArm {
  std::string name;
  std::function<void(ModelConfig&)> apply;
};

// "main" (KD/STA/CTD, five arms), "edge" (STA edge content, four arms),
// "relation" (CTD adjacency sources, five arms). Throws ConfigError otherwise.
std::vector<AblationArm> ablation_arms(const std::string& table);

struct AblationRow {
  std::string arm;
  std::optional<double> full;
  std::optional<double> rare;
  std::optional<double> non_rare;
};

// Trains and evaluates every arm once per seed in `seeds` (init and training
// order both use the seed) and averages the means over seeds.
std::vector<AblationRow> run_ablation(const std::vector<AblationArm>& arms, const Dataset& data,
                                      const ModelConfig& base, const TrainOptions& train,
                                      const std::vector<std::uint64_t>& seeds,
                                      std::size_t threads = 1);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace sctc
