#pragma once

// Tape-based reverse-mode differentiation over the handful of ops the
// factorized network needs. Each node keeps its op record, so the tape can
// be replayed in double precision for finite-difference checking.

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "cacl/linalg.hpp"

namespace cacl::ad {

struct NodeId {
  std::uint32_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatMul,
  kAdd,
  kScale,
  kTranspose,
  kDiagEmbed,
  kRelu,
  kConv2d,
  kLinear,
  kSoftmaxCrossEntropy,
  kFrobeniusNorm,
  kL1Norm,
  kL2Norm,
  kDropout,
  kDivide,
};

const char* op_name(OpKind kind);

// Geometry of a 2-D convolution over a batch stored as B x (channels*height*width).
struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t in_height = 0;
  std::size_t in_width = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_height() const { return (in_height + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_width() const { return (in_width + 2 * padding - kernel_w) / stride + 1; }
  std::size_t patch_size() const { return in_channels * kernel_h * kernel_w; }
  std::size_t in_size() const { return in_channels * in_height * in_width; }
  void validate() const;
};

struct OpRecord {
  OpKind kind = OpKind::kLeaf;
  std::vector<NodeId> inputs;
  float scalar = 0.0f;
  ConvGeometry conv;
  std::shared_ptr<const std::vector<int>> labels;
  std::vector<float> mask;  // dropout multipliers; empty means identity
};

// im2col for one sample: returns (in_channels*kh*kw) x (out_h*out_w).
template <class T>
BasicMatrix<T> im2col(std::span<const T> sample, const ConvGeometry& g);

class GradientSet {
 public:
  bool contains(NodeId id) const { return grads_.count(id) != 0; }
  const Matrix& at(NodeId id) const;
  std::size_t size() const { return grads_.size(); }
  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

  void insert(NodeId id, Matrix g) { grads_.insert_or_assign(id, std::move(g)); }

 private:
  std::map<NodeId, Matrix> grads_;
};

class Graph {
 public:
  struct Node {
    OpRecord op;
    Matrix value;
    bool trainable = false;
    bool requires_grad = false;
  };

  // Leaves
  NodeId parameter(Matrix value);  // trainable
  NodeId constant(Matrix value);   // frozen: visible in forward, never in gradients

  // Ops
  NodeId mat_mul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId a, float factor);
  NodeId transpose(NodeId a);
  NodeId diag_embed(NodeId vector);
  NodeId relu(NodeId a);
  // weight: c x (n*kh*kw); input: B x (n*H*W). Output: B x (c*out_h*out_w).
  NodeId conv2d(NodeId weight, NodeId input, const ConvGeometry& geometry);
  // features: B x d; weight: d x k; bias: 1 x k.
  NodeId linear(NodeId features, NodeId weight, NodeId bias);
  // Mean over the batch of -log softmax(logits)[label].
  NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);
  NodeId frobenius_norm(NodeId a);
  NodeId l1_norm(NodeId a);
  NodeId l2_norm(NodeId a);
  // Inverted dropout when `train`; identity otherwise.
  NodeId dropout(NodeId a, float rate, std::uint64_t seed, bool train);
  // Scalar / scalar.
  NodeId divide(NodeId numerator, NodeId denominator);

  const Matrix& value(NodeId id) const { return nodes_.at(id.index).value; }
  const Node& node(NodeId id) const { return nodes_.at(id.index); }
  std::size_t size() const { return nodes_.size(); }
  std::vector<NodeId> trainable_leaves() const;

  // Gradients of a scalar node with respect to every trainable leaf it reaches.
  GradientSet backward(NodeId loss) const;

  // Re-evaluates the tape in precision T. Leaf values may be overridden.
  // Returns every node value; `kinks` (optional) receives one bit per
  // non-smooth decision (relu sign, |x| sign) so callers can detect when a
  // perturbation crosses a kink.
  template <class T>
  std::vector<BasicMatrix<T>> replay(const std::map<NodeId, BasicMatrix<T>>& overrides = {},
                                     std::vector<bool>* kinks = nullptr) const;

  // Fault injection for the gradient checker's negative control: the backward
  // rule of `kind` contributes zeros.
  void zero_backward_for(OpKind kind) { zeroed_.insert(kind); }

 private:
  NodeId push(OpRecord op, Matrix value, bool trainable = false);
  const Node& checked(NodeId id) const;

  std::vector<Node> nodes_;
  std::set<OpKind> zeroed_;
};

struct GradCheckEntry {
  NodeId parameter;
  double max_relative_deviation = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose perturbation crossed a kink
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool passed = true;
};

// Compares backward() with central differences of a double-precision replay.
// Deviation per parameter is max_i |analytic_i - numeric_i| / max(max_i |numeric_i|, 1e-6).
GradCheckReport grad_check(const Graph& graph, NodeId loss, double step = 1e-3, double tolerance = 1e-3);

}  // namespace cacl::ad
