#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sctc/model.hpp"

namespace sctc {

struct GradcheckOptions {
  double step = 1e-5;         // central-difference half-width; step/10 is the fallback
  double tolerance = 1e-4;    // max relative error per group
  // Denominator floor of the relative error. It is raised to
  // noise_margin * eps * |loss| / step, the size of the rounding error in
  // the difference quotient, so entries whose true gradient is ~0 do not fail
  // on noise alone.
  double floor = 1e-6;
  double noise_margin = 1e4;
  // Zero-initialized biases put relus of all-zero relation rows exactly on
  // their kink, where the derivative is one-sided. The parameters are nudged
  // by N(0, perturb^2) first so the check runs at a generic point.
  double perturb = 0.02;
  std::size_t samples = 6;    // entries probed per parameter, plus the largest-gradient one
  std::uint64_t seed = 7;
  // Test hook: scales the analytic gradient of this group by corrupt_factor.
  std::string corrupt_group;
  double corrupt_factor = 1.01;
};

struct GroupCheck {
  std::string name;
  std::size_t entries = 0;
  double max_rel_error = 0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GroupCheck> groups;  // one per parameter, in store order
  double seconds = 0;
  bool passed() const;
};

double relative_error(double analytic, double numeric, double floor);

// Two small scenes whose candidate count stays under K, so every pair is
// selected and the loss is smooth in the parameters.
Dataset gradcheck_dataset(std::uint64_t seed = 7);

// Sum of the scenes' total losses over all candidate pairs, with gradients
// accumulated into the parameters when `backward` is set.
double scenes_loss(const Model& model, std::span<const Scene> scenes, const HoiVocabulary& vocab,
                   bool backward);

// Modifies the model's parameters (see GradcheckOptions::perturb).
GradcheckReport run_gradcheck(Model& model, std::span<const Scene> scenes,
                              const HoiVocabulary& vocab, const GradcheckOptions& options = {});

}  // namespace sctc
