#include "cacl/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace cacl {

MetricsReport compute_metrics(std::vector<std::vector<double>> acc_matrix, std::vector<std::size_t> sizes) {
  const std::size_t t = acc_matrix.size();
  if (t == 0) throw ArgumentError("compute_metrics: empty accuracy matrix");
  for (std::size_t j = 0; j < t; ++j) {
    if (acc_matrix[j].size() != t) throw ShapeError("compute_metrics: accuracy matrix must be square");
    for (std::size_t i = 0; i <= j; ++i) {
      const double a = acc_matrix[j][i];
      if (!(a >= 0.0 && a <= 1.0)) throw ArgumentError("compute_metrics: accuracy outside [0, 1]");
    }
  }
  MetricsReport r;
  const auto& last = acc_matrix.back();
  for (double a : last) r.acc += a;
  r.acc /= static_cast<double>(t);
  if (t > 1) {
    for (std::size_t i = 0; i + 1 < t; ++i) r.bwt += last[i] - acc_matrix[i][i];
    r.bwt /= static_cast<double>(t - 1);
  }
  r.acc_matrix = std::move(acc_matrix);
  r.size_bytes = std::move(sizes);
  return r;
}

double accuracy(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows() != labels.size()) throw ShapeError("accuracy: logits and labels differ in count");
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace cacl
