#pragma once

#include <span>
#include <vector>

#include "sctc/autodiff.hpp"
#include "sctc/fixtures.hpp"
#include "sctc/interaction.hpp"

namespace sctc {

enum class KdProvenance { kSingleHoi, kMultiHoiAverage, kNegativeAverage };

struct KdTarget {
  std::vector<double> embedding;
  KdProvenance provenance = KdProvenance::kSingleHoi;
};

struct KdOptions {
  // Negative pairs regress onto the mean of the whole table when set, or of
  // the HOI rows only otherwise.
  bool negatives_use_all_rows = true;
};

// Positive pairs map to their HOI row, or the mean of their HOI rows when
// they carry several actions. Negatives share one centroid. Throws
// VocabularyError for an (action, object) pair the vocabulary lacks.
std::vector<KdTarget> build_targets(std::span<const PairCandidate> pairs, const Scene& scene,
                                    const HoiVocabulary& vocab, const KdOptions& options = {});

Tensor stack_targets(std::span<const KdTarget> targets);

// (1/N) * sum_i sum_d |E_id - F_id|. The targets are constants.
Var kd_loss(Var features, const Tensor& targets);

}  // namespace sctc
