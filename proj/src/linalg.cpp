#include "cacl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cacl {

Tensor4::Tensor4(std::size_t c_, std::size_t n_, std::size_t h_, std::size_t w_, std::vector<float> values)
    : c(c_), n(n_), h(h_), w(w_), data(std::move(values)) {
  if (data.size() != c * n * h * w) throw ShapeError("Tensor4 data length does not match c*n*h*w");
}

Matrix reshape_to_matrix(const Tensor4& t) {
  // Row-major (c, n, h, w) is already row-major c x (n*h*w).
  return Matrix(t.c, t.n * t.h * t.w, t.data);
}

Tensor4 reshape_to_tensor(const Matrix& m, const Tensor4Shape& shape) {
  if (m.rows() != shape.c || m.cols() != shape.n * shape.h * shape.w) {
    throw ShapeError("reshape_to_tensor: " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     " cannot hold (" + std::to_string(shape.c) + "," + std::to_string(shape.n) + "," +
                     std::to_string(shape.h) + "," + std::to_string(shape.w) + ")");
  }
  return Tensor4(shape.c, shape.n, shape.h, shape.w, m.storage());
}

namespace {

// Column-major double working copy; columns are contiguous for the Jacobi sweeps.
struct ColMajor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  double* col(std::size_t j) { return a.data() + j * rows; }
  const double* col(std::size_t j) const { return a.data() + j * rows; }
};

ColMajor to_col_major(const Matrix& m, bool transposed) {
  ColMajor out;
  out.rows = transposed ? m.cols() : m.rows();
  out.cols = transposed ? m.rows() : m.cols();
  out.a.resize(out.rows * out.cols);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (transposed)
        out.a[i * out.rows + j] = v;
      else
        out.a[j * out.rows + i] = v;
    }
  return out;
}

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += x[k] * y[k];
  return s;
}

// Replace near-null columns of q (those flagged in `degenerate`) with unit
// vectors orthogonal to every other column.
void complete_basis(ColMajor& q, const std::vector<bool>& degenerate) {
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < q.cols; ++j) {
    if (!degenerate[j]) continue;
    double* cj = q.col(j);
    while (true) {
      if (candidate >= q.rows) throw NumericError("svd: cannot complete orthonormal basis");
      std::fill(cj, cj + q.rows, 0.0);
      cj[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < q.cols; ++k) {
          if (k == j || (degenerate[k] && k > j)) continue;
          const double* ck = q.col(k);
          const double p = dot(cj, ck, q.rows);
          for (std::size_t i = 0; i < q.rows; ++i) cj[i] -= p * ck[i];
        }
      }
      const double nrm = std::sqrt(dot(cj, cj, q.rows));
      if (nrm > 0.5) {
        for (std::size_t i = 0; i < q.rows; ++i) cj[i] /= nrm;
        break;
      }
    }
  }
}

}  // namespace

QrFactors qr(const Matrix& m) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  if (cols > rows) throw ArgumentError("qr: requires rows >= cols");
  ColMajor a = to_col_major(m, false);
  std::vector<std::vector<double>> reflectors(cols);

  for (std::size_t k = 0; k < cols; ++k) {
    double* ak = a.col(k);
    double norm = 0.0;
    for (std::size_t i = k; i < rows; ++i) norm += ak[i] * ak[i];
    norm = std::sqrt(norm);
    std::vector<double> v(rows - k, 0.0);
    if (norm == 0.0) {
      reflectors[k] = std::move(v);
      continue;
    }
    const double alpha = ak[k] > 0 ? -norm : norm;
    for (std::size_t i = k; i < rows; ++i) v[i - k] = ak[i];
    v[0] -= alpha;
    const double vnorm = std::sqrt(dot(v.data(), v.data(), v.size()));
    for (double& x : v) x /= vnorm;
    for (std::size_t j = k; j < cols; ++j) {
      double* aj = a.col(j);
      double p = 0.0;
      for (std::size_t i = k; i < rows; ++i) p += v[i - k] * aj[i];
      for (std::size_t i = k; i < rows; ++i) aj[i] -= 2.0 * p * v[i - k];
    }
    reflectors[k] = std::move(v);
  }

  // Q = H_0 H_1 ... H_{cols-1} applied to the first `cols` unit vectors.
  ColMajor q{rows, cols, std::vector<double>(rows * cols, 0.0)};
  for (std::size_t j = 0; j < cols; ++j) q.col(j)[j] = 1.0;
  for (std::size_t kk = cols; kk-- > 0;) {
    const auto& v = reflectors[kk];
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) continue;
    for (std::size_t j = 0; j < cols; ++j) {
      double* qj = q.col(j);
      double p = 0.0;
      for (std::size_t i = kk; i < rows; ++i) p += v[i - kk] * qj[i];
      for (std::size_t i = kk; i < rows; ++i) qj[i] -= 2.0 * p * v[i - kk];
    }
  }

  // Flip signs so diag(R) >= 0.
  QrFactors out{Matrix(rows, cols), Matrix(cols, cols)};
  for (std::size_t j = 0; j < cols; ++j) {
    const double d = a.col(j)[j];
    const double s = d < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < rows; ++i) out.q(i, j) = static_cast<float>(s * q.col(j)[i]);
    for (std::size_t c = j; c < cols; ++c) out.r(j, c) = static_cast<float>(s * a.col(c)[j]);
  }
  return out;
}

SvdFactors svd(const Matrix& m) {
  if (!all_finite(m)) throw NumericError("svd: input contains non-finite entries");
  if (m.rows() == 0 || m.cols() == 0) throw ShapeError("svd: empty matrix");

  // Work on the tall orientation: columns of `a` are rotated until mutually
  // orthogonal; then a = U diag(sigma), and the accumulated rotations form V.
  const bool transposed = m.rows() < m.cols();
  ColMajor a = to_col_major(m, transposed);
  const std::size_t rows = a.rows;
  const std::size_t n = a.cols;
  ColMajor rot{n, n, std::vector<double>(n * n, 0.0)};
  for (std::size_t j = 0; j < n; ++j) rot.col(j)[j] = 1.0;

  constexpr double kTol = 1e-15;
  constexpr int kMaxSweeps = 80;
  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) norms[j] = dot(a.col(j), a.col(j), rows);

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double* ap = a.col(p);
        double* aq = a.col(q);
        const double alpha = norms[p];
        const double beta = norms[q];
        if (alpha == 0.0 || beta == 0.0) continue;
        const double gamma = dot(ap, aq, rows);
        if (std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double x = ap[i];
          const double y = aq[i];
          ap[i] = c * x - s * y;
          aq[i] = s * x + c * y;
        }
        double* vp = rot.col(p);
        double* vq = rot.col(q);
        for (std::size_t i = 0; i < n; ++i) {
          const double x = vp[i];
          const double y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
        norms[p] = dot(ap, ap, rows);
        norms[q] = dot(aq, aq, rows);
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  double sigma_max = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    sigma[j] = std::sqrt(dot(a.col(j), a.col(j), rows));
    sigma_max = std::max(sigma_max, sigma[j]);
  }
  // Columns at rounding-noise level carry no direction; they are replaced by a
  // completed orthonormal basis and their singular value is set to zero.
  const double null_threshold = sigma_max * 1e-13;
  std::vector<bool> degenerate(n, false);
  for (std::size_t j = 0; j < n; ++j) {
    if (sigma[j] <= null_threshold || sigma[j] == 0.0) {
      degenerate[j] = true;
      sigma[j] = 0.0;
      continue;
    }
    double* aj = a.col(j);
    for (std::size_t i = 0; i < rows; ++i) aj[i] /= sigma[j];
  }
  complete_basis(a, degenerate);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  // Left factor of the tall problem is `a`, right factor is `rot`; swap back if transposed.
  const ColMajor& left = transposed ? rot : a;
  const ColMajor& right = transposed ? a : rot;
  SvdFactors out{Matrix(m.rows(), n), std::vector<float>(n), Matrix(m.cols(), n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    const double* lj = left.col(j);
    const double* rj = right.col(j);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < m.rows(); ++i)
      if (std::abs(lj[i]) > std::abs(lj[arg])) arg = i;
    const double sign = lj[arg] < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < m.rows(); ++i) out.u(i, k) = static_cast<float>(sign * lj[i]);
    for (std::size_t i = 0; i < m.cols(); ++i) out.v(i, k) = static_cast<float>(sign * rj[i]);
    out.sigma[k] = static_cast<float>(sigma[j]);
  }
  return out;
}

namespace {

Matrix weighted_outer_sum(const SvdFactors& f, std::size_t k) {
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

void check_factor_shapes(const SvdFactors& f) {
  if (f.u.cols() != f.sigma.size() || f.v.cols() != f.sigma.size())
    throw ShapeError("factor widths disagree with sigma length");
}

}  // namespace

Matrix reconstruct(const SvdFactors& f) {
  check_factor_shapes(f);
  return weighted_outer_sum(f, f.sigma.size());
}

Matrix rank_k_approx(const SvdFactors& f, std::size_t k) {
  check_factor_shapes(f);
  if (k < 1 || k > f.sigma.size())
    throw ArgumentError("rank_k_approx: k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(f.sigma.size()) + "]");
  return weighted_outer_sum(f, k);
}

Matrix random_orthonormal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (cols > rows)
    throw ArgumentError("random_orthonormal: cols (" + std::to_string(cols) + ") > rows (" +
                        std::to_string(rows) + ")");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix g(rows, cols);
  for (float& x : g.storage()) x = static_cast<float>(gauss(rng));
  return qr(g).q;
}

double gram_deviation_max(const Matrix& m) {
  double worst = 0.0;
  for (std::size_t a = 0; a < m.cols(); ++a)
    for (std::size_t b = a; b < m.cols(); ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < m.rows(); ++i) s += static_cast<double>(m(i, a)) * m(i, b);
      worst = std::max(worst, std::abs(s - (a == b ? 1.0 : 0.0)));
    }
  return worst;
}

double gram_deviation_fro(const Matrix& m) {
  double total = 0.0;
  for (std::size_t a = 0; a < m.cols(); ++a)
    for (std::size_t b = 0; b < m.cols(); ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < m.rows(); ++i) s += static_cast<double>(m(i, a)) * m(i, b);
      const double d = s - (a == b ? 1.0 : 0.0);
      total += d * d;
    }
  return std::sqrt(total);
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (float x : m.storage()) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.storage().begin(), m.storage().end(), [](float x) { return std::isfinite(x); });
}

}  // namespace cacl
