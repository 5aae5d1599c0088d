#pragma once

// Compression-aware continual training: per-task optimization of residual
// factors over the frozen shared space, then compression and append.

#include <cstdint>
#include <string>
#include <vector>

#include "cacl/compression.hpp"
#include "cacl/dataset.hpp"
#include "cacl/factorized.hpp"
#include "cacl/metrics.hpp"
#include "cacl/regularizers.hpp"

namespace cacl {

enum class TrainMode { kFull, kFixed, kSingleTask, kBaselineUb };

TrainMode parse_mode(const std::string& name);  // full | fixed | st | baseline_ub
const char* mode_name(TrainMode mode);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double base_lr = 1e-3;
  std::vector<std::size_t> lr_drop_epochs{80, 120, 180};
  double lr_drop_factor = 10.0;
  LossWeights weights{1.0, 0.0};
  PruneConfig prune{1e-5, 1, EnergyCriterion::kRetainedFraction};
  TrainMode mode = TrainMode::kFull;
  std::uint64_t seed = 0;
  AdamConfig adam;

  void validate() const;
};

// base_lr / factor^(number of drop epochs <= epoch).
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

// Adam with bias correction. Slots are addressed by index in the order
// parameters are passed to step().
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads, double lr);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

struct TrainedTask {
  TaskFactors factors;
  TaskHead head;
  std::vector<double> epoch_loss;  // mean objective per epoch
};

// Trains residual factors and head for one task on top of the frozen shared
// space (every stored column). U, V descend on task + orth terms; sigma on
// task + sparsity terms; the head on the task loss.
TrainedTask train_task(const TaskDataset& data, const SharedSpace& shared, ExpandedTask fresh, const TrainConfig& cfg);

struct DenseModel {
  std::vector<Matrix> weights;  // c x q per layer
  TaskHead head;

  std::size_t param_count() const;
};

DenseModel init_dense(const NetworkSpec& spec, int task, std::uint64_t seed);
DenseModel train_dense_task(const TaskDataset& data, const NetworkSpec& spec, DenseModel init, const TrainConfig& cfg);

struct RunResult {
  SharedSpace shared;                     // full / fixed
  std::vector<SharedSpace> single_task;   // st: one space per task
  std::vector<DenseModel> dense;          // baseline_ub
  MetricsReport report;
  // Test logits of task i right after it was added, and at the end of the run.
  std::vector<Matrix> logits_at_completion;
  std::vector<Matrix> logits_final;
  std::vector<TaskFactors> uncompressed;  // trained factors before pruning (factorized modes)
  std::vector<std::string> warnings;
};

RunResult run_continual(const std::vector<TaskDataset>& stream, const NetworkSpec& spec, const TrainConfig& cfg);

// Test logits of task t (1-based) through its identifiers.
Matrix task_logits(const SharedSpace& shared, std::size_t task, const Matrix& inputs);
Matrix dense_logits(const NetworkSpec& spec, const DenseModel& model, const Matrix& inputs);

}  // namespace cacl
