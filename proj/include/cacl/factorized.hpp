#pragma once

// SVD-parameterized convolutional network: per-task residual factors, the
// frozen shared space they are appended to, and the plain forward pass.

#include <cstdint>
#include <span>
#include <vector>

#include "cacl/autodiff.hpp"
#include "cacl/linalg.hpp"

namespace cacl {

struct LayerShape {
  std::size_t c = 0;  // output channels
  std::size_t n = 0;  // input channels
  std::size_t h = 0;  // kernel height
  std::size_t w = 0;  // kernel width

  std::size_t rows() const { return c; }
  std::size_t cols() const { return n * h * w; }
  std::size_t dense_params() const { return c * n * h * w; }
  bool operator==(const LayerShape&) const = default;
};

struct LayerSpec {
  LayerShape shape;
  std::size_t stride = 1;
  std::size_t padding = 0;
  float dropout = 0.0f;
  bool operator==(const LayerSpec&) const = default;
};

// Convolution stack (each conv followed by ReLU and optional dropout) feeding a
// per-task linear head on the flattened features.
struct NetworkSpec {
  std::size_t input_channels = 0;
  std::size_t input_height = 0;
  std::size_t input_width = 0;
  std::vector<LayerSpec> layers;
  std::size_t classes = 2;

  void validate() const;
  ad::ConvGeometry geometry(std::size_t layer) const;
  std::size_t input_size() const { return input_channels * input_height * input_width; }
  std::size_t head_input_dim() const;
  bool operator==(const NetworkSpec&) const = default;
};

struct LayerFactors {
  Matrix u;                  // c x r
  std::vector<float> sigma;  // r
  Matrix v;                  // q x r

  std::size_t rank() const { return sigma.size(); }
  bool operator==(const LayerFactors&) const = default;
};

struct TaskFactors {
  int task = 0;
  std::vector<LayerFactors> layers;

  std::vector<std::size_t> ranks() const;
};

struct TaskHead {
  Matrix weight;  // head_input_dim x classes
  Matrix bias;    // 1 x classes

  std::size_t param_count() const { return weight.size() + bias.size(); }
  bool operator==(const TaskHead&) const = default;
};

struct ExpandedTask {
  TaskFactors factors;
  TaskHead head;
};

// floor(c*n*h*w / (c + n*h*w + 1)), at least 1.
std::size_t expansion_rank(const LayerShape& shape);

// Fresh trainable factors (orthonormal U, V; sigma ~ U(0, 0.1]) and head.
ExpandedTask expand(const NetworkSpec& spec, int task, std::uint64_t seed);

TaskHead make_head(const NetworkSpec& spec, std::uint64_t seed);

// sum_{i<k} sigma_i u_i v_i^T with a fixed accumulation order, so a prefix
// reconstruction never depends on columns beyond k.
Matrix reconstruct_prefix(const LayerFactors& f, std::size_t k);

// Frozen factors of every task learned so far plus the task identifiers
// (cumulative per-layer ranks). Values are immutable: append() returns a new space.
class SharedSpace {
 public:
  SharedSpace() = default;
  explicit SharedSpace(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_tasks() const { return heads_.size(); }
  const LayerFactors& layer(std::size_t l) const { return layers_.at(l); }
  const std::vector<LayerFactors>& layers() const { return layers_; }

  // Cumulative rank R_{l,t}; t = 0 gives 0.
  std::size_t rank(std::size_t layer, std::size_t task) const;
  // L x T table, entry (l, t-1) = R_{l,t}.
  const std::vector<std::vector<std::uint32_t>>& rank_table() const { return rank_table_; }
  // Rank appended by task t at layer l.
  std::size_t appended_rank(std::size_t layer, std::size_t task) const;

  const TaskHead& head(std::size_t task) const;
  const std::vector<TaskHead>& heads() const { return heads_; }

  SharedSpace append(const TaskFactors& pruned, TaskHead head) const;

  // Rebuilds a space from stored parts (deserialization); validates invariants.
  static SharedSpace from_parts(NetworkSpec spec, std::vector<LayerFactors> layers,
                                std::vector<std::vector<std::uint32_t>> rank_table, std::vector<TaskHead> heads);

  bool operator==(const SharedSpace&) const = default;

 private:
  NetworkSpec spec_;
  std::vector<LayerFactors> layers_;
  std::vector<std::vector<std::uint32_t>> rank_table_;
  std::vector<TaskHead> heads_;
};

// W_l = shared prefix up to task `upto` (R_{l,upto} columns) + residual reconstruction.
std::vector<Matrix> compose_weights(const SharedSpace& shared, std::size_t upto, const TaskFactors& residual);

struct Subnetwork {
  std::vector<Matrix> weights;
  TaskHead head;
};

// Columns appended by task t (its compressed residual factors).
TaskFactors task_block(const SharedSpace& shared, std::size_t task);

// Weights of task t reconstructed from the first R_{l,t} columns of each layer.
Subnetwork extract_subnetwork(const SharedSpace& shared, std::size_t task);

// Trainable leaves for one layer's residual factors.
struct FactorNodes {
  ad::NodeId u;
  ad::NodeId sigma;
  ad::NodeId v;
};

struct HeadNodes {
  ad::NodeId weight;
  ad::NodeId bias;
};

// Graph form of compose_weights: frozen shared leaf + U diag(sigma) V^T.
// `shared_dense` may be empty (no shared term) or hold one matrix per layer.
std::vector<ad::NodeId> compose_weights_graph(ad::Graph& g, std::span<const Matrix> shared_dense,
                                              std::span<const FactorNodes> residual);

// Conv stack + head; returns the logits node.
ad::NodeId forward_graph(ad::Graph& g, const NetworkSpec& spec, std::span<const ad::NodeId> weights,
                         const HeadNodes& head, ad::NodeId input, bool train, std::uint64_t dropout_seed);

// Inference logits (eval mode) for a batch stored as B x input_size.
Matrix forward_logits(const NetworkSpec& spec, std::span<const Matrix> weights, const TaskHead& head,
                      const Matrix& inputs);

// Stored parameters: sum_l (c_l + q_l + 1) R_l plus every head.
std::size_t param_count(const SharedSpace& shared);
std::size_t factor_param_count(const SharedSpace& shared);
// 4 bytes per 32-bit parameter.
std::size_t size_bytes(std::size_t params);
// Decimal megabytes (10^6 bytes).
double size_mb(std::size_t bytes);

}  // namespace cacl
