#include "cacl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "cacl/errors.hpp"
#include "cacl/seed.hpp"

namespace cacl {

void TaskDataset::validate(std::size_t input_size) const {
  if (classes == 0) throw DataError("dataset: zero classes");
  if (train_x.rows() != train_y.size() || test_x.rows() != test_y.size())
    throw DataError("dataset: sample and label counts differ");
  if (train_x.rows() == 0) throw DataError("dataset: empty training split");
  if ((train_x.rows() && train_x.cols() != input_size) || (test_x.rows() && test_x.cols() != input_size))
    throw DataError("dataset: sample width " + std::to_string(train_x.cols()) + " != network input " +
                    std::to_string(input_size));
  for (const auto* labels : {&train_y, &test_y})
    for (int y : *labels)
      if (y < 0 || static_cast<std::size_t>(y) >= classes)
        throw DataError("dataset: label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  if (!all_finite(train_x) || !all_finite(test_x)) throw DataError("dataset: non-finite feature value");
}

void TaskStreamSpec::validate() const {
  if (tasks == 0) throw ConfigError("stream: at least one task required");
  if (input_size() == 0) throw ConfigError("stream: input shape must be positive");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("stream: test_fraction must lie in (0, 1)");
  if (kind == StreamKind::kSyntheticBlobs) {
    if (classes_per_task < 2) throw ConfigError("stream: at least two classes per task");
    if (samples_per_class < 2) throw ConfigError("stream: at least two samples per class");
    if (!(overlap >= 0.0) || !std::isfinite(overlap) || !std::isfinite(overlap_step) ||
        overlap + overlap_step * static_cast<double>(tasks - 1) < 0.0)
      throw ConfigError("stream: overlap must stay finite and non-negative");
    return;
  }
  if (path.empty()) throw ConfigError("stream: split_file requires a path");
  if (class_partition.size() != tasks)
    throw ConfigError("stream: class partition has " + std::to_string(class_partition.size()) + " groups for " +
                      std::to_string(tasks) + " tasks");
  std::set<int> seen;
  for (const auto& group : class_partition) {
    if (group.size() < 2) throw ConfigError("stream: every task needs at least two classes");
    for (int c : group)
      if (!seen.insert(c).second)
        throw ConfigError("stream: class " + std::to_string(c) + " appears in more than one task");
  }
}

namespace {

// Seeded 80/20 style split applied per class so both halves hold every class.
TaskDataset split_samples(const std::vector<std::vector<std::vector<float>>>& by_class, double test_fraction,
                          std::uint64_t seed) {
  std::vector<std::pair<std::vector<float>, int>> train, test;
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    std::vector<std::size_t> order(by_class[c].size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(order.size())));
    for (std::size_t k = 0; k < order.size(); ++k)
      (k < n_test ? test : train).emplace_back(by_class[c][order[k]], static_cast<int>(c));
  }
  std::shuffle(train.begin(), train.end(), rng);
  std::shuffle(test.begin(), test.end(), rng);
  const std::size_t d = by_class.front().front().size();
  TaskDataset out;
  out.classes = by_class.size();
  out.train_x = Matrix(train.size(), d);
  out.test_x = Matrix(test.size(), d);
  for (std::size_t i = 0; i < train.size(); ++i) {
    std::copy(train[i].first.begin(), train[i].first.end(), out.train_x.row(i).begin());
    out.train_y.push_back(train[i].second);
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::copy(test[i].first.begin(), test[i].first.end(), out.test_x.row(i).begin());
    out.test_y.push_back(test[i].second);
  }
  return out;
}

std::vector<TaskDataset> synthetic_blobs(const TaskStreamSpec& spec) {
  std::vector<TaskDataset> out;
  const std::size_t d = spec.input_size();
  // d x mean_rank basis shared by all tasks.
  Matrix basis(d, spec.mean_rank);
  {
    std::mt19937_64 rng(derive_seed(spec.seed, {0xB0u}));
    std::normal_distribution<float> normal;
    for (float& b : basis.storage()) b = normal(rng);
  }
  const float coeff_scale = spec.mean_rank ? 1.0f / std::sqrt(static_cast<float>(spec.mean_rank)) : 0.0f;
  for (std::size_t t = 0; t < spec.tasks; ++t) {
    std::mt19937_64 rng(derive_seed(spec.seed, {t, 0}));
    std::normal_distribution<float> normal;
    const float noise = static_cast<float>(spec.overlap + spec.overlap_step * static_cast<double>(t));
    std::vector<std::vector<std::vector<float>>> by_class(spec.classes_per_task);
    for (auto& samples : by_class) {
      std::vector<float> mean(d);
      if (spec.mean_rank == 0) {
        for (float& m : mean) m = normal(rng);
      } else {
        std::vector<float> z(spec.mean_rank);
        for (float& c : z) c = coeff_scale * normal(rng);
        for (std::size_t k = 0; k < d; ++k) {
          double acc = 0.0;
          for (std::size_t j = 0; j < z.size(); ++j) acc += static_cast<double>(basis(k, j)) * z[j];
          mean[k] = static_cast<float>(acc);
        }
      }
      for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
        std::vector<float> x(d);
        for (std::size_t k = 0; k < d; ++k) x[k] = mean[k] + noise * normal(rng);
        samples.push_back(std::move(x));
      }
    }
    out.push_back(split_samples(by_class, spec.test_fraction, derive_seed(spec.seed, {t, 1})));
  }
  return out;
}

std::vector<TaskDataset> split_file(const TaskStreamSpec& spec) {
  const LabeledSamples all = read_labeled_csv(spec.path, spec.input_size());
  std::map<int, std::vector<std::vector<float>>> by_label;
  for (std::size_t i = 0; i < all.y.size(); ++i)
    by_label[all.y[i]].emplace_back(all.x.row(i).begin(), all.x.row(i).end());
  std::vector<TaskDataset> out;
  for (std::size_t t = 0; t < spec.tasks; ++t) {
    std::vector<std::vector<std::vector<float>>> by_class;
    for (int c : spec.class_partition[t]) {
      auto it = by_label.find(c);
      if (it == by_label.end() || it->second.size() < 2)
        throw DataError("split_file: class " + std::to_string(c) + " has fewer than two samples in " + spec.path);
      by_class.push_back(it->second);
    }
    out.push_back(split_samples(by_class, spec.test_fraction, derive_seed(spec.seed, {t, 1})));
  }
  return out;
}

}  // namespace

std::vector<TaskDataset> generate_stream(const TaskStreamSpec& spec) {
  spec.validate();
  return spec.kind == StreamKind::kSyntheticBlobs ? synthetic_blobs(spec) : split_file(spec);
}

LabeledSamples read_labeled_csv(const std::string& path, std::size_t expected_features) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<float> values;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t field = 0;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      if (field == 0) {
        const long label = std::strtol(cell.c_str(), &end, 10);
        if (end == cell.c_str() || *end != '\0' || label < 0)
          throw DataError(path + ":" + std::to_string(line_no) + ": bad label '" + cell + "'");
        labels.push_back(static_cast<int>(label));
      } else {
        const float v = std::strtof(cell.c_str(), &end);
        if (end == cell.c_str() || !std::isfinite(v))
          throw DataError(path + ":" + std::to_string(line_no) + ": bad value '" + cell + "'");
        values.push_back(v);
      }
      ++field;
    }
    if (field != expected_features + 1)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(expected_features) +
                      " features, found " + std::to_string(field == 0 ? 0 : field - 1));
  }
  if (labels.empty()) throw DataError(path + ": no samples");
  return LabeledSamples{Matrix(labels.size(), expected_features, std::move(values)), std::move(labels)};
}

void write_labeled_csv(const std::string& path, const Matrix& x, const std::vector<int>& y) {
  if (x.rows() != y.size()) throw ShapeError("write_labeled_csv: sample and label counts differ");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  char buf[32];
  for (std::size_t i = 0; i < x.rows(); ++i) {
    out << y[i];
    for (float v : x.row(i)) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace cacl
