#pragma once

// Task streams: labeled samples per task, synthetic blob generation and
// class-partitioned loading of a labeled CSV file.

#include <cstdint>
#include <string>
#include <vector>

#include "cacl/linalg.hpp"

namespace cacl {

// Samples are rows of B x input_size matrices; labels are task-local in [0, classes).
struct TaskDataset {
  Matrix train_x;
  std::vector<int> train_y;
  Matrix test_x;
  std::vector<int> test_y;
  std::size_t classes = 0;

  void validate(std::size_t input_size) const;
  bool operator==(const TaskDataset&) const = default;
};

enum class StreamKind { kSyntheticBlobs, kSplitFile };

struct TaskStreamSpec {
  StreamKind kind = StreamKind::kSyntheticBlobs;
  std::size_t tasks = 5;
  std::size_t classes_per_task = 2;
  std::size_t samples_per_class = 200;
  std::size_t input_channels = 3;
  std::size_t input_height = 8;
  std::size_t input_width = 8;
  std::uint64_t seed = 0;
  // Per-dimension noise of task t is overlap + t * overlap_step (t from 0);
  // class means have unit-variance entries, so larger values overlap more.
  double overlap = 1.0;
  double overlap_step = 0.0;
  // When positive, class means of every task lie in one shared random
  // subspace of this dimension (tasks then share useful features).
  std::size_t mean_rank = 0;
  double test_fraction = 0.2;
  // split_file only.
  std::string path;
  std::vector<std::vector<int>> class_partition;

  std::size_t input_size() const { return input_channels * input_height * input_width; }
  void validate() const;
};

std::vector<TaskDataset> generate_stream(const TaskStreamSpec& spec);

// A labeled sample file: one sample per line, "label,f1,...,fd".
struct LabeledSamples {
  Matrix x;
  std::vector<int> y;
};

LabeledSamples read_labeled_csv(const std::string& path, std::size_t expected_features);
void write_labeled_csv(const std::string& path, const Matrix& x, const std::vector<int>& y);

}  // namespace cacl
