#include "cacl/factorized.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "cacl/seed.hpp"

namespace cacl {

void NetworkSpec::validate() const {
  if (input_channels == 0 || input_height == 0 || input_width == 0)
    throw ConfigError("network: input shape must be positive");
  if (layers.empty()) throw ConfigError("network: at least one convolutional layer required");
  if (classes == 0) throw ConfigError("network: classes must be positive");
  std::size_t channels = input_channels;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& layer = layers[l];
    const LayerShape& s = layer.shape;
    if (s.c == 0 || s.n == 0 || s.h == 0 || s.w == 0)
      throw ConfigError("network: layer " + std::to_string(l) + " has a zero dimension");
    if (s.n != channels)
      throw ConfigError("network: layer " + std::to_string(l) + " expects " + std::to_string(s.n) +
                        " input channels, previous layer produces " + std::to_string(channels));
    if (!(layer.dropout >= 0.0f && layer.dropout < 1.0f))
      throw ConfigError("network: dropout of layer " + std::to_string(l) + " outside [0, 1)");
    try {
      geometry(l).validate();
    } catch (const ShapeError& e) {
      throw ConfigError("network: layer " + std::to_string(l) + ": " + e.what());
    }
    channels = s.c;
  }
}

ad::ConvGeometry NetworkSpec::geometry(std::size_t layer) const {
  std::size_t h = input_height;
  std::size_t w = input_width;
  std::size_t ch = input_channels;
  for (std::size_t l = 0;; ++l) {
    const LayerSpec& spec = layers.at(l);
    ad::ConvGeometry g{ch, h, w, spec.shape.h, spec.shape.w, spec.stride, spec.padding};
    if (l == layer) return g;
    g.validate();
    h = g.out_height();
    w = g.out_width();
    ch = spec.shape.c;
  }
}

std::size_t NetworkSpec::head_input_dim() const {
  const ad::ConvGeometry g = geometry(layers.size() - 1);
  return layers.back().shape.c * g.out_height() * g.out_width();
}

std::vector<std::size_t> TaskFactors::ranks() const {
  std::vector<std::size_t> out;
  for (const auto& l : layers) out.push_back(l.rank());
  return out;
}

std::size_t expansion_rank(const LayerShape& shape) {
  const std::size_t q = shape.cols();
  return std::max<std::size_t>(1, shape.c * q / (shape.c + q + 1));
}

TaskHead make_head(const NetworkSpec& spec, std::uint64_t seed) {
  const std::size_t d = spec.head_input_dim();
  const float bound = 1.0f / std::sqrt(static_cast<float>(d));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-bound, bound);
  TaskHead head{Matrix(d, spec.classes), Matrix(1, spec.classes)};
  for (float& x : head.weight.storage()) x = dist(rng);
  for (float& x : head.bias.storage()) x = dist(rng);
  return head;
}

ExpandedTask expand(const NetworkSpec& spec, int task, std::uint64_t seed) {
  spec.validate();
  ExpandedTask out;
  out.factors.task = task;
  const auto t = static_cast<std::uint64_t>(task);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerShape& s = spec.layers[l].shape;
    const std::size_t r = expansion_rank(s);
    LayerFactors f;
    f.u = random_orthonormal(s.rows(), r, derive_seed(seed, {t, l, 0}));
    f.v = random_orthonormal(s.cols(), r, derive_seed(seed, {t, l, 1}));
    std::mt19937_64 rng(derive_seed(seed, {t, l, 2}));
    std::uniform_real_distribution<float> dist(0.0f, 0.1f);
    f.sigma.resize(r);
    for (float& x : f.sigma) x = 0.1f - dist(rng);  // (0, 0.1]
    out.factors.layers.push_back(std::move(f));
  }
  out.head = make_head(spec, derive_seed(seed, {t, 1000}));
  return out;
}

Matrix reconstruct_prefix(const LayerFactors& f, std::size_t k) {
  if (k > f.rank()) throw ArgumentError("reconstruct_prefix: k exceeds stored rank");
  const std::size_t rows = f.u.rows();
  const std::size_t cols = f.v.rows();
  Matrix out(rows, cols);
  std::vector<double> acc(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double us = static_cast<double>(f.u(i, p)) * f.sigma[p];
      for (std::size_t j = 0; j < cols; ++j) acc[j] += us * f.v(j, p);
    }
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = static_cast<float>(acc[j]);
  }
  return out;
}

// ---- SharedSpace ----

SharedSpace::SharedSpace(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (const LayerSpec& l : spec_.layers) {
    layers_.push_back(LayerFactors{Matrix(l.shape.rows(), 0), {}, Matrix(l.shape.cols(), 0)});
    rank_table_.emplace_back();
  }
}

std::size_t SharedSpace::rank(std::size_t layer, std::size_t task) const {
  if (layer >= layers_.size()) throw ArgumentError("layer index out of range");
  if (task > num_tasks()) throw ArgumentError("task index out of range");
  return task == 0 ? 0 : rank_table_[layer][task - 1];
}

std::size_t SharedSpace::appended_rank(std::size_t layer, std::size_t task) const {
  if (task == 0) throw ArgumentError("tasks are numbered from 1");
  return rank(layer, task) - rank(layer, task - 1);
}

const TaskHead& SharedSpace::head(std::size_t task) const {
  if (task < 1 || task > heads_.size())
    throw ArgumentError("task " + std::to_string(task) + " outside [1, " + std::to_string(heads_.size()) + "]");
  return heads_[task - 1];
}

namespace {

Matrix append_columns(const Matrix& base, const Matrix& extra) {
  Matrix out(base.rows(), base.cols() + extra.cols());
  for (std::size_t i = 0; i < base.rows(); ++i) {
    std::copy(base.row(i).begin(), base.row(i).end(), out.row(i).begin());
    std::copy(extra.row(i).begin(), extra.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(base.cols()));
  }
  return out;
}

void check_head(const NetworkSpec& spec, const TaskHead& head) {
  if (head.weight.rows() != spec.head_input_dim() || head.bias.rows() != 1 ||
      head.bias.cols() != head.weight.cols() || head.weight.cols() == 0)
    throw ShapeError("task head does not match network feature width");
}

void check_layer(const LayerShape& s, const LayerFactors& f, std::size_t l) {
  if (f.u.rows() != s.rows() || f.v.rows() != s.cols() || f.u.cols() != f.rank() || f.v.cols() != f.rank())
    throw ShapeError("factors of layer " + std::to_string(l) + " do not match its shape");
}

}  // namespace

SharedSpace SharedSpace::append(const TaskFactors& pruned, TaskHead head) const {
  if (pruned.layers.size() != layers_.size())
    throw ShapeError("append: factor layer count " + std::to_string(pruned.layers.size()) + " != " +
                     std::to_string(layers_.size()));
  check_head(spec_, head);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerFactors& f = pruned.layers[l];
    check_layer(spec_.layers[l].shape, f, l);
    for (std::size_t k = 0; k < f.rank(); ++k) {
      if (!std::isfinite(f.sigma[k]) || f.sigma[k] < 0.0f)
        throw ArgumentError("append: singular values must be finite and non-negative");
      if (k > 0 && f.sigma[k] > f.sigma[k - 1]) throw ArgumentError("append: singular values must be sorted");
    }
  }
  SharedSpace next = *this;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerFactors& f = pruned.layers[l];
    LayerFactors& dst = next.layers_[l];
    dst.u = append_columns(dst.u, f.u);
    dst.v = append_columns(dst.v, f.v);
    dst.sigma.insert(dst.sigma.end(), f.sigma.begin(), f.sigma.end());
    next.rank_table_[l].push_back(static_cast<std::uint32_t>(dst.sigma.size()));
  }
  next.heads_.push_back(std::move(head));
  return next;
}

SharedSpace SharedSpace::from_parts(NetworkSpec spec, std::vector<LayerFactors> layers,
                                    std::vector<std::vector<std::uint32_t>> rank_table, std::vector<TaskHead> heads) {
  SharedSpace out(std::move(spec));
  if (layers.size() != out.layers_.size() || rank_table.size() != out.layers_.size())
    throw ShapeError("shared space: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    check_layer(out.spec_.layers[l].shape, layers[l], l);
    const auto& row = rank_table[l];
    if (row.size() != heads.size()) throw ShapeError("shared space: rank table width != task count");
    std::uint32_t prev = 0;
    for (std::uint32_t r : row) {
      if (r < prev) throw ShapeError("shared space: rank table must be non-decreasing");
      prev = r;
    }
    if (prev != layers[l].rank()) throw ShapeError("shared space: final rank != stored width");
  }
  for (const TaskHead& h : heads) check_head(out.spec_, h);
  out.layers_ = std::move(layers);
  out.rank_table_ = std::move(rank_table);
  out.heads_ = std::move(heads);
  return out;
}

// ---- composition / extraction ----

std::vector<Matrix> compose_weights(const SharedSpace& shared, std::size_t upto, const TaskFactors& residual) {
  if (residual.layers.size() != shared.num_layers()) throw ShapeError("compose_weights: layer count mismatch");
  if (upto > shared.num_tasks()) throw ArgumentError("compose_weights: shared space has fewer tasks");
  std::vector<Matrix> out;
  for (std::size_t l = 0; l < shared.num_layers(); ++l) {
    check_layer(shared.spec().layers[l].shape, residual.layers[l], l);
    Matrix res = reconstruct_prefix(residual.layers[l], residual.layers[l].rank());
    const std::size_t r = shared.rank(l, upto);
    out.push_back(r == 0 ? std::move(res) : add(reconstruct_prefix(shared.layer(l), r), res));
  }
  return out;
}

Subnetwork extract_subnetwork(const SharedSpace& shared, std::size_t task) {
  if (task < 1 || task > shared.num_tasks())
    throw ArgumentError("extract_subnetwork: task " + std::to_string(task) + " outside [1, " +
                        std::to_string(shared.num_tasks()) + "]");
  Subnetwork out;
  for (std::size_t l = 0; l < shared.num_layers(); ++l)
    out.weights.push_back(reconstruct_prefix(shared.layer(l), shared.rank(l, task)));
  out.head = shared.head(task);
  return out;
}

TaskFactors task_block(const SharedSpace& shared, std::size_t task) {
  if (task < 1 || task > shared.num_tasks())
    throw ArgumentError("task_block: task " + std::to_string(task) + " outside [1, " +
                        std::to_string(shared.num_tasks()) + "]");
  TaskFactors out;
  out.task = static_cast<int>(task);
  for (std::size_t l = 0; l < shared.num_layers(); ++l) {
    const LayerFactors& src = shared.layer(l);
    const std::size_t begin = shared.rank(l, task - 1);
    const std::size_t end = shared.rank(l, task);
    LayerFactors f{Matrix(src.u.rows(), end - begin), {}, Matrix(src.v.rows(), end - begin)};
    for (std::size_t k = begin; k < end; ++k) {
      for (std::size_t i = 0; i < src.u.rows(); ++i) f.u(i, k - begin) = src.u(i, k);
      for (std::size_t j = 0; j < src.v.rows(); ++j) f.v(j, k - begin) = src.v(j, k);
      f.sigma.push_back(src.sigma[k]);
    }
    out.layers.push_back(std::move(f));
  }
  return out;
}

std::vector<ad::NodeId> compose_weights_graph(ad::Graph& g, std::span<const Matrix> shared_dense,
                                              std::span<const FactorNodes> residual) {
  if (!shared_dense.empty() && shared_dense.size() != residual.size())
    throw ShapeError("compose_weights_graph: layer count mismatch");
  std::vector<ad::NodeId> out;
  for (std::size_t l = 0; l < residual.size(); ++l) {
    const FactorNodes& f = residual[l];
    ad::NodeId w = g.mat_mul(g.mat_mul(f.u, g.diag_embed(f.sigma)), g.transpose(f.v));
    if (!shared_dense.empty()) w = g.add(g.constant(shared_dense[l]), w);
    out.push_back(w);
  }
  return out;
}

ad::NodeId forward_graph(ad::Graph& g, const NetworkSpec& spec, std::span<const ad::NodeId> weights,
                         const HeadNodes& head, ad::NodeId input, bool train, std::uint64_t dropout_seed) {
  if (weights.size() != spec.layers.size()) throw ShapeError("forward: one weight per layer required");
  ad::NodeId h = input;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    h = g.relu(g.conv2d(weights[l], h, spec.geometry(l)));
    if (spec.layers[l].dropout > 0.0f) h = g.dropout(h, spec.layers[l].dropout, derive_seed(dropout_seed, {l}), train);
  }
  return g.linear(h, head.weight, head.bias);
}

Matrix forward_logits(const NetworkSpec& spec, std::span<const Matrix> weights, const TaskHead& head,
                      const Matrix& inputs) {
  ad::Graph g;
  std::vector<ad::NodeId> w;
  for (const Matrix& m : weights) w.push_back(g.constant(m));
  const HeadNodes h{g.constant(head.weight), g.constant(head.bias)};
  const ad::NodeId logits = forward_graph(g, spec, w, h, g.constant(inputs), false, 0);
  return g.value(logits);
}

std::size_t factor_param_count(const SharedSpace& shared) {
  std::size_t total = 0;
  for (std::size_t l = 0; l < shared.num_layers(); ++l) {
    const LayerShape& s = shared.spec().layers[l].shape;
    total += (s.rows() + s.cols() + 1) * shared.layer(l).rank();
  }
  return total;
}

std::size_t param_count(const SharedSpace& shared) {
  std::size_t total = factor_param_count(shared);
  for (const TaskHead& h : shared.heads()) total += h.param_count();
  return total;
}

std::size_t size_bytes(std::size_t params) { return 4 * params; }

double size_mb(std::size_t bytes) { return static_cast<double>(bytes) / 1e6; }

}  // namespace cacl
