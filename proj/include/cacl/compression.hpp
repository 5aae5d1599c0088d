#pragma once

// Post-training singular value sorting and energy-threshold pruning.

#include <span>
#include <vector>

#include "cacl/factorized.hpp"

namespace cacl {

enum class EnergyCriterion {
  // Smallest k with retained / total >= 1 - e (loop form; default).
  kRetainedFraction,
  // Smallest k with tail <= e * retained (inline inequality form).
  kTailToRetained,
};

struct PruneConfig {
  double energy_e = 1e-5;
  std::size_t min_rank = 1;
  EnergyCriterion criterion = EnergyCriterion::kRetainedFraction;

  void validate() const;
};

// Per layer: columns of U, V and entries of sigma permuted so |sigma| is
// non-increasing (stable); negative values are made positive by negating the
// matching U column.
TaskFactors sort_by_magnitude(const TaskFactors& factors);

// Number of leading values kept from a sorted, non-negative sigma.
std::size_t energy_topk(std::span<const float> sorted_sigma, const PruneConfig& cfg);

// Keeps the first topk columns of each layer. Requires sorted, non-negative sigma.
TaskFactors energy_prune(const TaskFactors& sorted, const PruneConfig& cfg);

// sort_by_magnitude followed by energy_prune.
TaskFactors compress(const TaskFactors& factors, const PruneConfig& cfg);

struct LayerCompressionStats {
  std::size_t rank_before = 0;
  std::size_t rank_after = 0;
  double tail_energy = 0.0;        // sum of squared discarded singular values
  double squared_error = 0.0;      // ||W_full - W_pruned||_F^2, measured
  double gram_deviation_u = 0.0;   // ||U^T U - I||_F of the sorted factors
  double gram_deviation_v = 0.0;
};

// Measured reconstruction error of pruning, per layer.
std::vector<LayerCompressionStats> compression_stats(const TaskFactors& original, const TaskFactors& pruned);

// Re-prunes every task's column block of a stored space (for example one
// saved without pruning). `stats`, when given, receives [task][layer] entries.
SharedSpace recompress(const SharedSpace& shared, const PruneConfig& cfg,
                       std::vector<std::vector<LayerCompressionStats>>* stats = nullptr);

}  // namespace cacl
