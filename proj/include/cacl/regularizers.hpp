#pragma once

#include <span>

#include "cacl/autodiff.hpp"
#include "cacl/factorized.hpp"

namespace cacl {

struct LossWeights {
  double lambda_orth = 1.0;
  double lambda_sparse = 0.0;

  void validate() const;
};

// Guard added to ||sigma||_2 in the training-graph Hoyer term.
inline constexpr float kHoyerEpsilon = 1e-12f;

// sum_l (1/r_l^2) (||U_l^T U_l - I||_F + ||V_l^T V_l - I||_F), non-squared norms.
double l_orth(const TaskFactors& factors);

// sum_l ||sigma_l||_1 / ||sigma_l||_2. Throws NumericError on an all-zero layer.
double l_sparse(const TaskFactors& factors);

double total_loss(double task_loss, double orth, double sparse, const LossWeights& w);

// Graph forms; they consume the same trainable leaves the weights are built from.
ad::NodeId l_orth_graph(ad::Graph& g, std::span<const FactorNodes> factors);
ad::NodeId l_sparse_graph(ad::Graph& g, std::span<const FactorNodes> factors, float epsilon = kHoyerEpsilon);
ad::NodeId total_loss_graph(ad::Graph& g, ad::NodeId task_loss, ad::NodeId orth, ad::NodeId sparse,
                            const LossWeights& w);

}  // namespace cacl
