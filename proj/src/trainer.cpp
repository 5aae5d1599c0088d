#include "cacl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "cacl/seed.hpp"

namespace cacl {

TrainMode parse_mode(const std::string& name) {
  if (name == "full") return TrainMode::kFull;
  if (name == "fixed") return TrainMode::kFixed;
  if (name == "st") return TrainMode::kSingleTask;
  if (name == "baseline_ub") return TrainMode::kBaselineUb;
  throw ConfigError("unknown mode '" + name + "' (expected full, fixed, st or baseline_ub)");
}

const char* mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kFull:
      return "full";
    case TrainMode::kFixed:
      return "fixed";
    case TrainMode::kSingleTask:
      return "st";
    case TrainMode::kBaselineUb:
      return "baseline_ub";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be positive");
  if (!(lr_drop_factor > 0.0) || !std::isfinite(lr_drop_factor)) throw ConfigError("lr_drop_factor must be positive");
  for (std::size_t k = 0; k < lr_drop_epochs.size(); ++k) {
    if (lr_drop_epochs[k] >= epochs) throw ConfigError("lr_drop_epochs must be < epochs");
    if (k > 0 && lr_drop_epochs[k] <= lr_drop_epochs[k - 1])
      throw ConfigError("lr_drop_epochs must be strictly increasing");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.epsilon > 0.0))
    throw ConfigError("adam: betas must lie in [0, 1) and epsilon be positive");
  weights.validate();
  prune.validate();
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  double lr = cfg.base_lr;
  for (std::size_t drop : cfg.lr_drop_epochs)
    if (epoch >= drop) lr /= cfg.lr_drop_factor;
  return lr;
}

void Adam::step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads, double lr) {
  if (params.size() != grads.size()) throw ArgumentError("adam: parameter and gradient counts differ");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }
  if (m_.size() != params.size()) throw ArgumentError("adam: parameter count changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    const Matrix& g = *grads[k];
    if (g.rows() != p.rows() || g.cols() != p.cols() || m_[k].size() != p.size())
      throw ShapeError("adam: gradient shape differs from parameter");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double m = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * gi;
      const double v = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * gi * gi;
      m_[k][i] = static_cast<float>(m);
      v_[k][i] = static_cast<float>(v);
      p[i] = static_cast<float>(p[i] - lr * (m / c1) / (std::sqrt(v / c2) + cfg_.epsilon));
    }
  }
}

namespace {

Matrix row_of(const std::vector<float>& v) { return Matrix(1, v.size(), v); }

Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
  Matrix out(end - begin, x.cols());
  for (std::size_t i = begin; i < end; ++i)
    std::copy(x.row(order[i]).begin(), x.row(order[i]).end(), out.row(i - begin).begin());
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& y, const std::vector<std::size_t>& order, std::size_t begin,
                               std::size_t end) {
  std::vector<int> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(y[order[i]]);
  return out;
}

// a + scale * b, where either gradient set may lack the node (treated as zero).
Matrix combine(const ad::GradientSet& a, const ad::GradientSet* b, double scale, ad::NodeId id, const Matrix& like) {
  Matrix out = a.contains(id) ? a.at(id) : Matrix(like.rows(), like.cols());
  if (b && b->contains(id)) {
    const Matrix& extra = b->at(id);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(out[i] + scale * extra[i]);
  }
  return out;
}

void check_dataset(const TaskDataset& data, const NetworkSpec& spec) {
  data.validate(spec.input_size());
  if (data.classes != spec.classes)
    throw DataError("task has " + std::to_string(data.classes) + " classes, network heads have " +
                    std::to_string(spec.classes));
}

// Runs the shared epoch/batch loop; `step` receives the batch and returns the objective value.
template <class StepFn>
std::vector<double> run_epochs(const TaskDataset& data, const TrainConfig& cfg, std::uint64_t task_seed, StepFn step) {
  std::vector<double> losses;
  const std::size_t n = data.train_x.rows();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(task_seed, {epoch, 0x5u}));
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = lr_schedule(epoch, cfg);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0, s = 0; begin < n; begin += cfg.batch_size, ++s) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const Matrix x = gather_rows(data.train_x, order, begin, end);
      const double value = step(x, gather_labels(data.train_y, order, begin, end), lr,
                                derive_seed(task_seed, {epoch, s, 0x3u}));
      if (!std::isfinite(value))
        throw TrainingError("objective became non-finite", static_cast<int>(epoch), static_cast<int>(s));
      sum += value;
      ++batches;
    }
    losses.push_back(sum / static_cast<double>(batches));
  }
  return losses;
}

}  // namespace

TrainedTask train_task(const TaskDataset& data, const SharedSpace& shared, ExpandedTask fresh, const TrainConfig& cfg) {
  cfg.validate();
  const NetworkSpec& spec = shared.spec();
  check_dataset(data, spec);
  const std::size_t layers = spec.layers.size();
  if (fresh.factors.layers.size() != layers) throw ShapeError("train_task: factor layer count mismatch");

  std::vector<Matrix> shared_dense;
  if (shared.num_tasks() > 0)
    for (std::size_t l = 0; l < layers; ++l)
      shared_dense.push_back(reconstruct_prefix(shared.layer(l), shared.layer(l).rank()));

  // Parameter order: per layer (U, sigma, V), then head weight and bias.
  std::vector<Matrix> params;
  for (const LayerFactors& f : fresh.factors.layers) {
    params.push_back(f.u);
    params.push_back(row_of(f.sigma));
    params.push_back(f.v);
  }
  params.push_back(fresh.head.weight);
  params.push_back(fresh.head.bias);

  const auto task_id = static_cast<std::uint64_t>(fresh.factors.task);
  Adam adam(cfg.adam);
  TrainedTask out;
  out.epoch_loss = run_epochs(
      data, cfg, derive_seed(cfg.seed, {task_id, 0x7u}),
      [&](const Matrix& x, std::vector<int> labels, double lr, std::uint64_t dropout_seed) {
        ad::Graph g;
        std::vector<ad::NodeId> ids;
        for (const Matrix& p : params) ids.push_back(g.parameter(p));
        std::vector<FactorNodes> factors;
        for (std::size_t l = 0; l < layers; ++l) factors.push_back({ids[3 * l], ids[3 * l + 1], ids[3 * l + 2]});
        const HeadNodes head{ids[3 * layers], ids[3 * layers + 1]};

        const auto weights = compose_weights_graph(g, shared_dense, factors);
        const ad::NodeId logits = forward_graph(g, spec, weights, head, g.constant(x), true, dropout_seed);
        const ad::NodeId task_loss = g.softmax_cross_entropy(logits, std::move(labels));
        double objective = g.value(task_loss)[0];

        const ad::GradientSet task_grads = g.backward(task_loss);
        std::optional<ad::GradientSet> orth_grads, sparse_grads;
        if (cfg.weights.lambda_orth != 0.0) {
          const ad::NodeId orth = l_orth_graph(g, factors);
          objective += cfg.weights.lambda_orth * g.value(orth)[0];
          orth_grads = g.backward(orth);
        }
        if (cfg.weights.lambda_sparse != 0.0) {
          const ad::NodeId sparse = l_sparse_graph(g, factors);
          objective += cfg.weights.lambda_sparse * g.value(sparse)[0];
          sparse_grads = g.backward(sparse);
        }
        if (!std::isfinite(objective)) return objective;

        std::vector<Matrix> grads;
        for (std::size_t l = 0; l < layers; ++l) {
          const FactorNodes& f = factors[l];
          const ad::GradientSet* orth = orth_grads ? &*orth_grads : nullptr;
          const ad::GradientSet* sparse = sparse_grads ? &*sparse_grads : nullptr;
          grads.push_back(combine(task_grads, orth, cfg.weights.lambda_orth, f.u, params[3 * l]));
          grads.push_back(combine(task_grads, sparse, cfg.weights.lambda_sparse, f.sigma, params[3 * l + 1]));
          grads.push_back(combine(task_grads, orth, cfg.weights.lambda_orth, f.v, params[3 * l + 2]));
        }
        grads.push_back(combine(task_grads, nullptr, 0.0, head.weight, params[3 * layers]));
        grads.push_back(combine(task_grads, nullptr, 0.0, head.bias, params[3 * layers + 1]));

        std::vector<Matrix*> p;
        std::vector<const Matrix*> gp;
        for (std::size_t k = 0; k < params.size(); ++k) {
          p.push_back(&params[k]);
          gp.push_back(&grads[k]);
        }
        adam.step(p, gp, lr);
        return objective;
      });

  out.factors.task = fresh.factors.task;
  for (std::size_t l = 0; l < layers; ++l) {
    const Matrix& s = params[3 * l + 1];
    out.factors.layers.push_back(
        LayerFactors{params[3 * l], std::vector<float>(s.storage().begin(), s.storage().end()), params[3 * l + 2]});
  }
  out.head = TaskHead{params[3 * layers], params[3 * layers + 1]};
  return out;
}

std::size_t DenseModel::param_count() const {
  std::size_t total = head.param_count();
  for (const Matrix& w : weights) total += w.size();
  return total;
}

DenseModel init_dense(const NetworkSpec& spec, int task, std::uint64_t seed) {
  spec.validate();
  DenseModel m;
  const auto t = static_cast<std::uint64_t>(task);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerShape& s = spec.layers[l].shape;
    std::mt19937_64 rng(derive_seed(seed, {t, l, 0xDu}));
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(s.cols())));
    Matrix w(s.rows(), s.cols());
    for (float& x : w.storage()) x = dist(rng);
    m.weights.push_back(std::move(w));
  }
  m.head = make_head(spec, derive_seed(seed, {t, 1000}));
  return m;
}

DenseModel train_dense_task(const TaskDataset& data, const NetworkSpec& spec, DenseModel init, const TrainConfig& cfg) {
  cfg.validate();
  check_dataset(data, spec);
  const std::size_t layers = spec.layers.size();
  if (init.weights.size() != layers) throw ShapeError("train_dense_task: weight count mismatch");
  std::vector<Matrix> params = init.weights;
  params.push_back(init.head.weight);
  params.push_back(init.head.bias);
  Adam adam(cfg.adam);
  run_epochs(data, cfg, derive_seed(cfg.seed, {0xBA5Eu}), [&](const Matrix& x, std::vector<int> labels, double lr, std::uint64_t dropout_seed) {
    ad::Graph g;
    std::vector<ad::NodeId> ids;
    for (const Matrix& p : params) ids.push_back(g.parameter(p));
    const std::vector<ad::NodeId> weights(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(layers));
    const ad::NodeId logits =
        forward_graph(g, spec, weights, {ids[layers], ids[layers + 1]}, g.constant(x), true, dropout_seed);
    const ad::NodeId loss = g.softmax_cross_entropy(logits, std::move(labels));
    const double value = g.value(loss)[0];
    if (!std::isfinite(value)) return value;
    const ad::GradientSet grads = g.backward(loss);
    std::vector<Matrix> gs;
    std::vector<Matrix*> p;
    std::vector<const Matrix*> gp;
    for (std::size_t k = 0; k < params.size(); ++k) gs.push_back(combine(grads, nullptr, 0.0, ids[k], params[k]));
    for (std::size_t k = 0; k < params.size(); ++k) {
      p.push_back(&params[k]);
      gp.push_back(&gs[k]);
    }
    adam.step(p, gp, lr);
    return value;
  });
  DenseModel out;
  out.weights.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(layers));
  out.head = TaskHead{params[layers], params[layers + 1]};
  return out;
}

Matrix task_logits(const SharedSpace& shared, std::size_t task, const Matrix& inputs) {
  const Subnetwork sub = extract_subnetwork(shared, task);
  return forward_logits(shared.spec(), sub.weights, sub.head, inputs);
}

Matrix dense_logits(const NetworkSpec& spec, const DenseModel& model, const Matrix& inputs) {
  return forward_logits(spec, model.weights, model.head, inputs);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Keeps at most `cap[l]` columns per layer (prefix of sorted factors).
TaskFactors truncate_to(const TaskFactors& f, const std::vector<std::size_t>& cap) {
  TaskFactors out;
  out.task = f.task;
  for (std::size_t l = 0; l < f.layers.size(); ++l) {
    const LayerFactors& src = f.layers[l];
    const std::size_t k = std::min(src.rank(), cap[l]);
    LayerFactors dst{Matrix(src.u.rows(), k), std::vector<float>(src.sigma.begin(), src.sigma.begin() + k),
                     Matrix(src.v.rows(), k)};
    for (std::size_t i = 0; i < src.u.rows(); ++i)
      for (std::size_t j = 0; j < k; ++j) dst.u(i, j) = src.u(i, j);
    for (std::size_t i = 0; i < src.v.rows(); ++i)
      for (std::size_t j = 0; j < k; ++j) dst.v(i, j) = src.v(i, j);
    out.layers.push_back(std::move(dst));
  }
  return out;
}

}  // namespace

RunResult run_continual(const std::vector<TaskDataset>& stream, const NetworkSpec& spec, const TrainConfig& cfg) {
  spec.validate();
  cfg.validate();
  if (stream.empty()) throw ArgumentError("run_continual: empty task stream");
  for (std::size_t t = 0; t < stream.size(); ++t) {
    try {
      check_dataset(stream[t], spec);
    } catch (const DataError& e) {
      throw DataError("task " + std::to_string(t + 1) + ": " + e.what());
    }
  }

  const std::size_t T = stream.size();
  const std::size_t L = spec.layers.size();
  RunResult result;
  result.shared = SharedSpace(spec);
  std::vector<std::vector<double>> acc(T, std::vector<double>(T, kNotEvaluated));
  std::vector<std::size_t> sizes;
  std::vector<std::vector<std::size_t>> ranks(L, std::vector<std::size_t>(T, 0));
  std::vector<double> wall;
  std::vector<std::size_t> dense_bound(L);
  for (std::size_t l = 0; l < L; ++l) dense_bound[l] = expansion_rank(spec.layers[l].shape);

  for (std::size_t t = 1; t <= T; ++t) {
    const auto start = Clock::now();
    const TaskDataset& data = stream[t - 1];
    const int task = static_cast<int>(t);
    try {
      switch (cfg.mode) {
        case TrainMode::kFull:
        case TrainMode::kFixed: {
          TrainedTask trained = train_task(data, result.shared, expand(spec, task, cfg.seed), cfg);
          result.uncompressed.push_back(sort_by_magnitude(trained.factors));
          TaskFactors pruned = compress(trained.factors, cfg.prune);
          if (cfg.mode == TrainMode::kFixed) {
            std::vector<std::size_t> remaining(L);
            for (std::size_t l = 0; l < L; ++l)
              remaining[l] = dense_bound[l] - std::min(dense_bound[l], result.shared.layer(l).rank());
            pruned = truncate_to(pruned, remaining);
          }
          result.shared = result.shared.append(pruned, std::move(trained.head));
          for (std::size_t l = 0; l < L; ++l) {
            ranks[l][t - 1] = result.shared.appended_rank(l, t);
            if (cfg.mode == TrainMode::kFull && result.shared.layer(l).rank() > dense_bound[l] &&
                result.shared.rank(l, t - 1) <= dense_bound[l])
              result.warnings.push_back("layer " + std::to_string(l) + ": cumulative rank " +
                                        std::to_string(result.shared.layer(l).rank()) + " after task " +
                                        std::to_string(t) + " exceeds the dense-storage bound " +
                                        std::to_string(dense_bound[l]));
          }
          for (std::size_t i = 1; i <= t; ++i)
            acc[t - 1][i - 1] = accuracy(task_logits(result.shared, i, stream[i - 1].test_x), stream[i - 1].test_y);
          result.logits_at_completion.push_back(task_logits(result.shared, t, data.test_x));
          sizes.push_back(size_bytes(param_count(result.shared)));
          break;
        }
        case TrainMode::kSingleTask: {
          const SharedSpace empty(spec);
          TrainedTask trained = train_task(data, empty, expand(spec, task, cfg.seed), cfg);
          result.uncompressed.push_back(sort_by_magnitude(trained.factors));
          result.single_task.push_back(empty.append(compress(trained.factors, cfg.prune), std::move(trained.head)));
          for (std::size_t l = 0; l < L; ++l) ranks[l][t - 1] = result.single_task.back().layer(l).rank();
          for (std::size_t i = 1; i <= t; ++i)
            acc[t - 1][i - 1] =
                accuracy(task_logits(result.single_task[i - 1], 1, stream[i - 1].test_x), stream[i - 1].test_y);
          result.logits_at_completion.push_back(task_logits(result.single_task.back(), 1, data.test_x));
          std::size_t total = 0;
          for (const SharedSpace& s : result.single_task) total += size_bytes(param_count(s));
          sizes.push_back(total);
          break;
        }
        case TrainMode::kBaselineUb: {
          DenseModel init = init_dense(spec, task, cfg.seed);
          TrainConfig dense_cfg = cfg;
          dense_cfg.seed = derive_seed(cfg.seed, {t});
          result.dense.push_back(train_dense_task(data, spec, std::move(init), dense_cfg));
          for (std::size_t i = 1; i <= t; ++i)
            acc[t - 1][i - 1] =
                accuracy(dense_logits(spec, result.dense[i - 1], stream[i - 1].test_x), stream[i - 1].test_y);
          result.logits_at_completion.push_back(dense_logits(spec, result.dense.back(), data.test_x));
          std::size_t total = 0;
          for (const DenseModel& m : result.dense) total += size_bytes(m.param_count());
          sizes.push_back(total);
          break;
        }
      }
    } catch (const TrainingError& e) {
      throw TrainingError(std::string("task ") + std::to_string(t) + ": " + e.what(), e.epoch(), e.step());
    }
    wall.push_back(seconds_since(start));
  }

  for (std::size_t i = 1; i <= T; ++i) {
    const Matrix& x = stream[i - 1].test_x;
    switch (cfg.mode) {
      case TrainMode::kFull:
      case TrainMode::kFixed:
        result.logits_final.push_back(task_logits(result.shared, i, x));
        break;
      case TrainMode::kSingleTask:
        result.logits_final.push_back(task_logits(result.single_task[i - 1], 1, x));
        break;
      case TrainMode::kBaselineUb:
        result.logits_final.push_back(dense_logits(spec, result.dense[i - 1], x));
        break;
    }
  }

  result.report = compute_metrics(std::move(acc), std::move(sizes));
  result.report.ranks = std::move(ranks);
  result.report.wall_seconds = std::move(wall);
  return result;
}

}  // namespace cacl
