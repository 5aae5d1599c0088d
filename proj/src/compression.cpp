#include "cacl/compression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cacl {

void PruneConfig::validate() const {
  if (!(energy_e >= 0.0 && energy_e < 1.0)) throw ConfigError("energy e must lie in [0, 1)");
  if (min_rank < 1) throw ConfigError("min_rank must be at least 1");
}

namespace {

Matrix take_columns(const Matrix& m, std::span<const std::size_t> cols) {
  Matrix out(m.rows(), cols.size());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t k = 0; k < cols.size(); ++k) out(i, k) = m(i, cols[k]);
  return out;
}

}  // namespace

TaskFactors sort_by_magnitude(const TaskFactors& factors) {
  TaskFactors out;
  out.task = factors.task;
  for (const LayerFactors& f : factors.layers) {
    std::vector<std::size_t> order(f.rank());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(f.sigma[a]) > std::abs(f.sigma[b]); });
    LayerFactors s{take_columns(f.u, order), {}, take_columns(f.v, order)};
    s.sigma.reserve(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      float value = f.sigma[order[k]];
      if (value < 0.0f) {
        value = -value;
        for (std::size_t i = 0; i < s.u.rows(); ++i) s.u(i, k) = -s.u(i, k);
      }
      s.sigma.push_back(value);
    }
    out.layers.push_back(std::move(s));
  }
  return out;
}

std::size_t energy_topk(std::span<const float> sorted_sigma, const PruneConfig& cfg) {
  cfg.validate();
  const std::size_t r = sorted_sigma.size();
  double total = 0.0;
  for (float s : sorted_sigma) total += static_cast<double>(s) * s;

  std::size_t topk = 0;
  if (cfg.criterion == EnergyCriterion::kRetainedFraction) {
    double current = 0.0;
    // An all-zero layer gives 0/0; the comparison is false and nothing is taken.
    while (topk < r && current / total < 1.0 - cfg.energy_e) {
      current += static_cast<double>(sorted_sigma[topk]) * sorted_sigma[topk];
      ++topk;
    }
  } else if (total > 0.0) {
    double retained = 0.0;
    for (topk = 1; topk <= r; ++topk) {
      retained += static_cast<double>(sorted_sigma[topk - 1]) * sorted_sigma[topk - 1];
      if (total - retained <= cfg.energy_e * retained) break;
    }
    topk = std::min(topk, r);
  }
  return std::min(r, std::max(topk, cfg.min_rank));
}

TaskFactors energy_prune(const TaskFactors& sorted, const PruneConfig& cfg) {
  TaskFactors out;
  out.task = sorted.task;
  for (const LayerFactors& f : sorted.layers) {
    for (std::size_t k = 0; k < f.rank(); ++k) {
      if (f.sigma[k] < 0.0f || (k > 0 && f.sigma[k] > f.sigma[k - 1]))
        throw ArgumentError("energy_prune: sigma must be sorted descending and non-negative");
    }
    const std::size_t k = energy_topk(f.sigma, cfg);
    std::vector<std::size_t> keep(k);
    std::iota(keep.begin(), keep.end(), 0);
    out.layers.push_back(
        LayerFactors{take_columns(f.u, keep), std::vector<float>(f.sigma.begin(), f.sigma.begin() + k),
                     take_columns(f.v, keep)});
  }
  return out;
}

TaskFactors compress(const TaskFactors& factors, const PruneConfig& cfg) {
  return energy_prune(sort_by_magnitude(factors), cfg);
}

std::vector<LayerCompressionStats> compression_stats(const TaskFactors& original, const TaskFactors& pruned) {
  if (original.layers.size() != pruned.layers.size()) throw ShapeError("compression_stats: layer count mismatch");
  const TaskFactors sorted = sort_by_magnitude(original);
  std::vector<LayerCompressionStats> out;
  for (std::size_t l = 0; l < sorted.layers.size(); ++l) {
    const LayerFactors& full = sorted.layers[l];
    const LayerFactors& kept = pruned.layers[l];
    LayerCompressionStats s;
    s.rank_before = full.rank();
    s.rank_after = kept.rank();
    for (std::size_t k = kept.rank(); k < full.rank(); ++k) s.tail_energy += static_cast<double>(full.sigma[k]) * full.sigma[k];
    const Matrix a = reconstruct_prefix(full, full.rank());
    const Matrix b = reconstruct_prefix(kept, kept.rank());
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = static_cast<double>(a[k]) - b[k];
      s.squared_error += d * d;
    }
    s.gram_deviation_u = gram_deviation_fro(full.u);
    s.gram_deviation_v = gram_deviation_fro(full.v);
    out.push_back(s);
  }
  return out;
}

SharedSpace recompress(const SharedSpace& shared, const PruneConfig& cfg,
                       std::vector<std::vector<LayerCompressionStats>>* stats) {
  cfg.validate();
  SharedSpace out(shared.spec());
  if (stats) stats->clear();
  for (std::size_t t = 1; t <= shared.num_tasks(); ++t) {
    const TaskFactors block = task_block(shared, t);
    const TaskFactors pruned = compress(block, cfg);
    if (stats) stats->push_back(compression_stats(block, pruned));
    out = out.append(pruned, shared.head(t));
  }
  return out;
}

}  // namespace cacl
