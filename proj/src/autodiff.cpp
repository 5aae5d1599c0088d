#include "cacl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace cacl::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatMul: return "mat_mul";
    case OpKind::kAdd: return "add";
    case OpKind::kScale: return "scale";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kDiagEmbed: return "diag_embed";
    case OpKind::kRelu: return "relu";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kLinear: return "linear";
    case OpKind::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::kFrobeniusNorm: return "frobenius_norm";
    case OpKind::kL1Norm: return "l1_norm";
    case OpKind::kL2Norm: return "l2_norm";
    case OpKind::kDropout: return "dropout";
    case OpKind::kDivide: return "divide";
  }
  return "unknown";
}

void ConvGeometry::validate() const {
  if (in_channels == 0 || in_height == 0 || in_width == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0)
    throw ShapeError("conv2d: zero-sized geometry");
  if (in_height + 2 * padding < kernel_h || in_width + 2 * padding < kernel_w)
    throw ShapeError("conv2d: kernel larger than padded input");
}

const Matrix& GradientSet::at(NodeId id) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) throw ArgumentError("no gradient for node " + std::to_string(id.index));
  return it->second;
}

template <class T>
BasicMatrix<T> im2col(std::span<const T> sample, const ConvGeometry& g) {
  const std::size_t oh = g.out_height();
  const std::size_t ow = g.out_width();
  BasicMatrix<T> cols(g.patch_size(), oh * ow);
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t ch = 0; ch < g.in_channels; ++ch)
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        T* dst = cols.row((ch * g.kernel_h + ky) * g.kernel_w + kx).data();
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            const bool inside = y >= 0 && x >= 0 && y < static_cast<std::ptrdiff_t>(g.in_height) &&
                                x < static_cast<std::ptrdiff_t>(g.in_width);
            dst[oy * ow + ox] = inside ? sample[(ch * g.in_height + y) * g.in_width + x] : T{};
          }
        }
      }
  return cols;
}

template BasicMatrix<float> im2col<float>(std::span<const float>, const ConvGeometry&);
template BasicMatrix<double> im2col<double>(std::span<const double>, const ConvGeometry&);

namespace {

// Scatter-add of a column gradient back onto one sample's input gradient.
void col2im_add(const Matrix& dcols, const ConvGeometry& g, std::span<float> dsample) {
  const std::size_t oh = g.out_height();
  const std::size_t ow = g.out_width();
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t ch = 0; ch < g.in_channels; ++ch)
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const float* src = dcols.row((ch * g.kernel_h + ky) * g.kernel_w + kx).data();
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.in_height)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.in_width)) continue;
            dsample[(ch * g.in_height + y) * g.in_width + x] += src[oy * ow + ox];
          }
        }
      }
}

template <class T>
BasicMatrix<T> scalar(T v) {
  return BasicMatrix<T>(1, 1, v);
}

bool is_vector(const Matrix& m) { return m.rows() == 1 || m.cols() == 1; }

// Forward rule shared by graph construction (float) and replay (any T).
template <class T>
BasicMatrix<T> eval_op(const OpRecord& op, const std::vector<const BasicMatrix<T>*>& in, std::vector<bool>* kinks) {
  switch (op.kind) {
    case OpKind::kLeaf:
      throw ArgumentError("eval_op called on a leaf");
    case OpKind::kMatMul:
      return matmul(*in[0], *in[1]);
    case OpKind::kAdd:
      return add(*in[0], *in[1]);
    case OpKind::kScale: {
      BasicMatrix<T> out = *in[0];
      for (auto& x : out.storage()) x *= static_cast<T>(op.scalar);
      return out;
    }
    case OpKind::kTranspose:
      return transpose(*in[0]);
    case OpKind::kDiagEmbed: {
      const auto& v = *in[0];
      BasicMatrix<T> out(v.size(), v.size());
      for (std::size_t i = 0; i < v.size(); ++i) out(i, i) = v[i];
      return out;
    }
    case OpKind::kRelu: {
      BasicMatrix<T> out = *in[0];
      for (auto& x : out.storage()) {
        if (kinks) kinks->push_back(x > T{});
        x = x > T{} ? x : T{};
      }
      return out;
    }
    case OpKind::kConv2d: {
      const auto& w = *in[0];
      const auto& x = *in[1];
      const auto& g = op.conv;
      const std::size_t plane = g.out_height() * g.out_width();
      BasicMatrix<T> out(x.rows(), w.rows() * plane);
      for (std::size_t b = 0; b < x.rows(); ++b) {
        const BasicMatrix<T> y = matmul(w, im2col<T>(x.row(b), g));
        std::copy(y.storage().begin(), y.storage().end(), out.row(b).begin());
      }
      return out;
    }
    case OpKind::kLinear: {
      BasicMatrix<T> out = matmul(*in[0], *in[1]);
      const auto& bias = *in[2];
      for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias[j];
      return out;
    }
    case OpKind::kSoftmaxCrossEntropy: {
      const auto& z = *in[0];
      const auto& labels = *op.labels;
      T total{};
      for (std::size_t b = 0; b < z.rows(); ++b) {
        const auto row = z.row(b);
        const T mx = *std::max_element(row.begin(), row.end());
        T se{};
        for (T v : row) se += std::exp(v - mx);
        total += std::log(se) + mx - row[static_cast<std::size_t>(labels[b])];
      }
      return scalar<T>(total / static_cast<T>(z.rows()));
    }
    case OpKind::kFrobeniusNorm:
    case OpKind::kL2Norm: {
      T s{};
      for (T v : in[0]->storage()) s += v * v;
      return scalar<T>(std::sqrt(s));
    }
    case OpKind::kL1Norm: {
      T s{};
      for (T v : in[0]->storage()) {
        if (kinks) kinks->push_back(v > T{});
        s += std::abs(v);
      }
      return scalar<T>(s);
    }
    case OpKind::kDropout: {
      BasicMatrix<T> out = *in[0];
      if (!op.mask.empty())
        for (std::size_t k = 0; k < out.size(); ++k) out[k] *= static_cast<T>(op.mask[k]);
      return out;
    }
    case OpKind::kDivide:
      return scalar<T>((*in[0])[0] / (*in[1])[0]);
  }
  throw ArgumentError("unknown op kind");
}

void accumulate(Matrix& dst, const Matrix& src) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

}  // namespace

NodeId Graph::push(OpRecord op, Matrix value, bool trainable) {
  bool needs_grad = trainable;
  for (NodeId in : op.inputs) needs_grad = needs_grad || nodes_[in.index].requires_grad;
  nodes_.push_back(Node{std::move(op), std::move(value), trainable, needs_grad});
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Graph::Node& Graph::checked(NodeId id) const {
  if (id.index >= nodes_.size()) throw ArgumentError("node id " + std::to_string(id.index) + " not in graph");
  return nodes_[id.index];
}

NodeId Graph::parameter(Matrix value) { return push(OpRecord{}, std::move(value), true); }

NodeId Graph::constant(Matrix value) { return push(OpRecord{}, std::move(value), false); }

namespace {

OpRecord make_op(OpKind kind, std::vector<NodeId> inputs) {
  OpRecord op;
  op.kind = kind;
  op.inputs = std::move(inputs);
  return op;
}

}  // namespace

#define CACL_EVAL(op)                                                   \
  [&] {                                                                  \
    std::vector<const Matrix*> in;                                       \
    for (NodeId id : (op).inputs) in.push_back(&checked(id).value);      \
    return eval_op<float>((op), in, nullptr);                            \
  }()

NodeId Graph::mat_mul(NodeId a, NodeId b) {
  auto op = make_op(OpKind::kMatMul, {a, b});
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

NodeId Graph::add(NodeId a, NodeId b) {
  auto op = make_op(OpKind::kAdd, {a, b});
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

NodeId Graph::scale(NodeId a, float factor) {
  auto op = make_op(OpKind::kScale, {a});
  op.scalar = factor;
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

NodeId Graph::transpose(NodeId a) {
  auto op = make_op(OpKind::kTranspose, {a});
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

NodeId Graph::diag_embed(NodeId vector) {
  if (!is_vector(checked(vector).value)) throw ShapeError("diag_embed: input must be a vector");
  auto op = make_op(OpKind::kDiagEmbed, {vector});
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

NodeId Graph::relu(NodeId a) {
  auto op = make_op(OpKind::kRelu, {a});
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

NodeId Graph::conv2d(NodeId weight, NodeId input, const ConvGeometry& geometry) {
  geometry.validate();
  const Matrix& w = checked(weight).value;
  const Matrix& x = checked(input).value;
  if (w.cols() != geometry.patch_size())
    throw ShapeError("conv2d: weight has " + std::to_string(w.cols()) + " columns, geometry needs " +
                     std::to_string(geometry.patch_size()));
  if (x.cols() != geometry.in_size())
    throw ShapeError("conv2d: input has " + std::to_string(x.cols()) + " columns, geometry needs " +
                     std::to_string(geometry.in_size()));
  auto op = make_op(OpKind::kConv2d, {weight, input});
  op.conv = geometry;
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

NodeId Graph::linear(NodeId features, NodeId weight, NodeId bias) {
  const Matrix& f = checked(features).value;
  const Matrix& w = checked(weight).value;
  const Matrix& b = checked(bias).value;
  if (f.cols() != w.rows()) throw ShapeError("linear: feature width does not match weight rows");
  if (b.rows() != 1 || b.cols() != w.cols()) throw ShapeError("linear: bias must be 1 x classes");
  auto op = make_op(OpKind::kLinear, {features, weight, bias});
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

NodeId Graph::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
  const Matrix& z = checked(logits).value;
  if (labels.size() != z.rows()) throw ShapeError("softmax_cross_entropy: one label per row required");
  if (z.rows() == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= z.cols())
      throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(z.cols()) + ")");
  auto op = make_op(OpKind::kSoftmaxCrossEntropy, {logits});
  op.labels = std::make_shared<const std::vector<int>>(std::move(labels));
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

NodeId Graph::frobenius_norm(NodeId a) {
  auto op = make_op(OpKind::kFrobeniusNorm, {a});
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

NodeId Graph::l1_norm(NodeId a) {
  auto op = make_op(OpKind::kL1Norm, {a});
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

NodeId Graph::l2_norm(NodeId a) {
  if (!is_vector(checked(a).value)) throw ShapeError("l2_norm: input must be a vector");
  auto op = make_op(OpKind::kL2Norm, {a});
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

NodeId Graph::dropout(NodeId a, float rate, std::uint64_t seed, bool train) {
  if (!(rate >= 0.0f && rate < 1.0f)) throw ArgumentError("dropout: rate must lie in [0, 1)");
  auto op = make_op(OpKind::kDropout, {a});
  if (train && rate > 0.0f) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution keep(1.0 - rate);
    const float kept = 1.0f / (1.0f - rate);
    op.mask.resize(checked(a).value.size());
    for (float& m : op.mask) m = keep(rng) ? kept : 0.0f;
  }
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

NodeId Graph::divide(NodeId numerator, NodeId denominator) {
  if (checked(numerator).value.size() != 1 || checked(denominator).value.size() != 1)
    throw ShapeError("divide: operands must be scalars");
  auto op = make_op(OpKind::kDivide, {numerator, denominator});
  Matrix v = CACL_EVAL(op);
  return push(std::move(op), std::move(v));
}

#undef CACL_EVAL

std::vector<NodeId> Graph::trainable_leaves() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].trainable) out.push_back(NodeId{static_cast<std::uint32_t>(i)});
  return out;
}

GradientSet Graph::backward(NodeId loss) const {
  const Node& root = checked(loss);
  if (root.value.size() != 1) throw ArgumentError("backward: loss node must be scalar");

  std::vector<Matrix> grads(nodes_.size());
  std::vector<bool> reached(nodes_.size(), false);
  grads[loss.index] = Matrix(1, 1, 1.0f);
  reached[loss.index] = true;

  auto sink = [&](NodeId id) -> Matrix* {
    Node const& n = nodes_[id.index];
    if (!n.requires_grad) return nullptr;
    if (!reached[id.index]) {
      grads[id.index] = Matrix(n.value.rows(), n.value.cols());
      reached[id.index] = true;
    }
    return &grads[id.index];
  };

  for (std::size_t idx = loss.index + 1; idx-- > 0;) {
    if (!reached[idx]) continue;
    const Node& n = nodes_[idx];
    if (n.op.kind == OpKind::kLeaf || !n.requires_grad) continue;
    const Matrix& g = grads[idx];
    const auto& in = n.op.inputs;
    const bool zeroed = zeroed_.count(n.op.kind) != 0;
    auto input_value = [&](std::size_t k) -> const Matrix& { return nodes_[in[k].index].value; };

    switch (n.op.kind) {
      case OpKind::kLeaf:
        break;
      case OpKind::kMatMul: {
        if (Matrix* da = sink(in[0]); da && !zeroed) accumulate(*da, matmul_nt(g, input_value(1)));
        if (Matrix* db = sink(in[1]); db && !zeroed) accumulate(*db, matmul_tn(input_value(0), g));
        break;
      }
      case OpKind::kAdd: {
        for (std::size_t k = 0; k < 2; ++k)
          if (Matrix* d = sink(in[k]); d && !zeroed) accumulate(*d, g);
        break;
      }
      case OpKind::kScale: {
        if (Matrix* d = sink(in[0]); d && !zeroed)
          for (std::size_t k = 0; k < d->size(); ++k) (*d)[k] += n.op.scalar * g[k];
        break;
      }
      case OpKind::kTranspose: {
        if (Matrix* d = sink(in[0]); d && !zeroed) accumulate(*d, cacl::transpose(g));
        break;
      }
      case OpKind::kDiagEmbed: {
        if (Matrix* d = sink(in[0]); d && !zeroed)
          for (std::size_t k = 0; k < d->size(); ++k) (*d)[k] += g(k, k);
        break;
      }
      case OpKind::kRelu: {
        if (Matrix* d = sink(in[0]); d && !zeroed) {
          const Matrix& x = input_value(0);
          for (std::size_t k = 0; k < d->size(); ++k)
            if (x[k] > 0.0f) (*d)[k] += g[k];
        }
        break;
      }
      case OpKind::kConv2d: {
        const Matrix& w = input_value(0);
        const Matrix& x = input_value(1);
        const auto& geo = n.op.conv;
        const std::size_t plane = geo.out_height() * geo.out_width();
        Matrix* dw = sink(in[0]);
        Matrix* dx = sink(in[1]);
        if (zeroed || (!dw && !dx)) break;
        for (std::size_t b = 0; b < x.rows(); ++b) {
          const auto grow = g.row(b);
          Matrix gout(w.rows(), plane, std::vector<float>(grow.begin(), grow.end()));
          if (dw) accumulate(*dw, matmul_nt(gout, im2col<float>(x.row(b), geo)));
          if (dx) col2im_add(matmul_tn(w, gout), geo, dx->row(b));
        }
        break;
      }
      case OpKind::kLinear: {
        Matrix* df = sink(in[0]);
        Matrix* dw = sink(in[1]);
        Matrix* db = sink(in[2]);
        if (zeroed) break;
        if (df) accumulate(*df, matmul_nt(g, input_value(1)));
        if (dw) accumulate(*dw, matmul_tn(input_value(0), g));
        if (db)
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) (*db)[j] += g(i, j);
        break;
      }
      case OpKind::kSoftmaxCrossEntropy: {
        Matrix* d = sink(in[0]);
        if (!d || zeroed) break;
        const Matrix& z = input_value(0);
        const auto& labels = *n.op.labels;
        const float scale = g[0] / static_cast<float>(z.rows());
        for (std::size_t b = 0; b < z.rows(); ++b) {
          const auto row = z.row(b);
          const float mx = *std::max_element(row.begin(), row.end());
          double se = 0.0;
          for (float v : row) se += std::exp(static_cast<double>(v - mx));
          for (std::size_t j = 0; j < row.size(); ++j) {
            float p = static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / se);
            if (static_cast<int>(j) == labels[b]) p -= 1.0f;
            (*d)(b, j) += scale * p;
          }
        }
        break;
      }
      case OpKind::kFrobeniusNorm:
      case OpKind::kL2Norm: {
        Matrix* d = sink(in[0]);
        if (!d || zeroed) break;
        const float norm = n.value[0];
        if (norm == 0.0f) break;  // subgradient 0 at the origin
        const Matrix& x = input_value(0);
        const float s = g[0] / norm;
        for (std::size_t k = 0; k < d->size(); ++k) (*d)[k] += s * x[k];
        break;
      }
      case OpKind::kL1Norm: {
        Matrix* d = sink(in[0]);
        if (!d || zeroed) break;
        const Matrix& x = input_value(0);
        for (std::size_t k = 0; k < d->size(); ++k) {
          const float sgn = x[k] > 0.0f ? 1.0f : (x[k] < 0.0f ? -1.0f : 0.0f);
          (*d)[k] += g[0] * sgn;
        }
        break;
      }
      case OpKind::kDropout: {
        Matrix* d = sink(in[0]);
        if (!d || zeroed) break;
        if (n.op.mask.empty()) {
          accumulate(*d, g);
        } else {
          for (std::size_t k = 0; k < d->size(); ++k) (*d)[k] += g[k] * n.op.mask[k];
        }
        break;
      }
      case OpKind::kDivide: {
        Matrix* da = sink(in[0]);
        Matrix* db = sink(in[1]);
        if (zeroed) break;
        const float a = input_value(0)[0];
        const float b = input_value(1)[0];
        if (da) (*da)[0] += g[0] / b;
        if (db) (*db)[0] -= g[0] * a / (b * b);
        break;
      }
    }
  }

  GradientSet out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].trainable && reached[i]) out.insert(NodeId{static_cast<std::uint32_t>(i)}, std::move(grads[i]));
  return out;
}

template <class T>
std::vector<BasicMatrix<T>> Graph::replay(const std::map<NodeId, BasicMatrix<T>>& overrides,
                                          std::vector<bool>* kinks) const {
  std::vector<BasicMatrix<T>> values;
  values.reserve(nodes_.size());
  std::vector<const BasicMatrix<T>*> in;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op.kind == OpKind::kLeaf) {
      auto it = overrides.find(NodeId{static_cast<std::uint32_t>(i)});
      values.push_back(it != overrides.end() ? it->second : n.value.template cast<T>());
      continue;
    }
    in.clear();
    for (NodeId id : n.op.inputs) in.push_back(&values[id.index]);
    values.push_back(eval_op<T>(n.op, in, kinks));
  }
  return values;
}

template std::vector<BasicMatrix<float>> Graph::replay<float>(const std::map<NodeId, BasicMatrix<float>>&,
                                                              std::vector<bool>*) const;
template std::vector<BasicMatrix<double>> Graph::replay<double>(const std::map<NodeId, BasicMatrix<double>>&,
                                                                std::vector<bool>*) const;

GradCheckReport grad_check(const Graph& graph, NodeId loss, double step, double tolerance) {
  GradCheckReport report;
  const GradientSet analytic = graph.backward(loss);

  std::vector<bool> base_kinks;
  graph.replay<double>({}, &base_kinks);

  for (const auto& [id, grad] : analytic) {
    GradCheckEntry entry{id};
    MatrixD point = graph.value(id).cast<double>();
    std::vector<double> numeric(point.size(), 0.0);
    std::vector<bool> usable(point.size(), true);
    for (std::size_t k = 0; k < point.size(); ++k) {
      const double original = point[k];
      double f[2];
      bool crossed = false;
      for (int side = 0; side < 2; ++side) {
        point[k] = original + (side == 0 ? step : -step);
        std::vector<bool> kinks;
        const auto values = graph.replay<double>({{id, point}}, &kinks);
        f[side] = values[loss.index][0];
        crossed = crossed || kinks != base_kinks;
      }
      point[k] = original;
      numeric[k] = (f[0] - f[1]) / (2.0 * step);
      usable[k] = !crossed;
    }
    double scale = 1e-6;
    for (std::size_t k = 0; k < numeric.size(); ++k)
      if (usable[k]) scale = std::max(scale, std::abs(numeric[k]));
    for (std::size_t k = 0; k < numeric.size(); ++k) {
      if (!usable[k]) {
        ++entry.skipped;
        continue;
      }
      ++entry.checked;
      const double dev = std::abs(static_cast<double>(grad[k]) - numeric[k]) / scale;
      entry.max_relative_deviation = std::max(entry.max_relative_deviation, dev);
    }
    report.worst = std::max(report.worst, entry.max_relative_deviation);
    report.entries.push_back(entry);
  }
  report.passed = report.worst <= tolerance;
  return report;
}

}  // namespace cacl::ad
