#include "cacl/regularizers.hpp"

#include <cmath>

namespace cacl {

void LossWeights::validate() const {
  if (!std::isfinite(lambda_orth) || !std::isfinite(lambda_sparse) || lambda_orth < 0 || lambda_sparse < 0)
    throw ConfigError("loss weights must be finite and non-negative");
}

double l_orth(const TaskFactors& factors) {
  double total = 0.0;
  for (const LayerFactors& f : factors.layers) {
    if (f.rank() == 0) continue;
    const double r = static_cast<double>(f.rank());
    total += (gram_deviation_fro(f.u) + gram_deviation_fro(f.v)) / (r * r);
  }
  return total;
}

double l_sparse(const TaskFactors& factors) {
  double total = 0.0;
  for (std::size_t l = 0; l < factors.layers.size(); ++l) {
    double l1 = 0.0, l2 = 0.0;
    for (float s : factors.layers[l].sigma) {
      l1 += std::abs(static_cast<double>(s));
      l2 += static_cast<double>(s) * s;
    }
    if (l2 == 0.0) throw NumericError("l_sparse: all-zero singular values in layer " + std::to_string(l));
    total += l1 / std::sqrt(l2);
  }
  return total;
}

double total_loss(double task_loss, double orth, double sparse, const LossWeights& w) {
  return task_loss + w.lambda_orth * orth + w.lambda_sparse * sparse;
}

namespace {

ad::NodeId sum_nodes(ad::Graph& g, const std::vector<ad::NodeId>& terms) {
  if (terms.empty()) return g.constant(Matrix(1, 1, 0.0f));
  ad::NodeId acc = terms.front();
  for (std::size_t k = 1; k < terms.size(); ++k) acc = g.add(acc, terms[k]);
  return acc;
}

ad::NodeId gram_deviation_node(ad::Graph& g, ad::NodeId m) {
  const std::size_t r = g.value(m).cols();
  const ad::NodeId gram = g.mat_mul(g.transpose(m), m);
  Matrix minus_identity(r, r);
  for (std::size_t i = 0; i < r; ++i) minus_identity(i, i) = -1.0f;
  return g.frobenius_norm(g.add(gram, g.constant(std::move(minus_identity))));
}

}  // namespace

ad::NodeId l_orth_graph(ad::Graph& g, std::span<const FactorNodes> factors) {
  std::vector<ad::NodeId> terms;
  for (const FactorNodes& f : factors) {
    const std::size_t r = g.value(f.u).cols();
    if (r == 0) continue;
    const ad::NodeId both = g.add(gram_deviation_node(g, f.u), gram_deviation_node(g, f.v));
    terms.push_back(g.scale(both, 1.0f / static_cast<float>(r * r)));
  }
  return sum_nodes(g, terms);
}

ad::NodeId l_sparse_graph(ad::Graph& g, std::span<const FactorNodes> factors, float epsilon) {
  std::vector<ad::NodeId> terms;
  for (const FactorNodes& f : factors) {
    const ad::NodeId denom = g.add(g.l2_norm(f.sigma), g.constant(Matrix(1, 1, epsilon)));
    terms.push_back(g.divide(g.l1_norm(f.sigma), denom));
  }
  return sum_nodes(g, terms);
}

ad::NodeId total_loss_graph(ad::Graph& g, ad::NodeId task_loss, ad::NodeId orth, ad::NodeId sparse,
                            const LossWeights& w) {
  ad::NodeId total = task_loss;
  if (w.lambda_orth != 0.0) total = g.add(total, g.scale(orth, static_cast<float>(w.lambda_orth)));
  if (w.lambda_sparse != 0.0) total = g.add(total, g.scale(sparse, static_cast<float>(w.lambda_sparse)));
  return total;
}

}  // namespace cacl
