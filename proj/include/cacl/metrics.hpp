#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "cacl/linalg.hpp"

namespace cacl {

inline constexpr double kNotEvaluated = std::numeric_limits<double>::quiet_NaN();

struct MetricsReport {
  // Entry [j][i]: test accuracy on task i after training task j; NaN above the diagonal.
  std::vector<std::vector<double>> acc_matrix;
  double acc = 0.0;
  double bwt = 0.0;
  // Stored bytes after each task.
  std::vector<std::size_t> size_bytes;
  // Appended rank per [layer][task].
  std::vector<std::vector<std::size_t>> ranks;
  std::vector<double> wall_seconds;
};

// ACC = mean of the final row; BWT = mean over i < T of (R[T][i] - R[i][i]); 0 when T = 1.
MetricsReport compute_metrics(std::vector<std::vector<double>> acc_matrix, std::vector<std::size_t> sizes);

// Fraction of rows whose arg-max (first on ties) equals the label.
double accuracy(const Matrix& logits, const std::vector<int>& labels);

}  // namespace cacl
