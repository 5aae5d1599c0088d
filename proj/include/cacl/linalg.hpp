#pragma once

// Dense row-major matrices, 4-D convolution weights, and the factorizations
// the rest of the library is built on (Householder QR, one-sided Jacobi SVD).

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <span>
#include <vector>

#include "cacl/errors.hpp"

namespace cacl {

template <class T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static BasicMatrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    BasicMatrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged row list");
      std::size_t j = 0;
      for (T v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  // Column vector (n x 1).
  static BasicMatrix column(std::vector<T> values) {
    const std::size_t n = values.size();
    return BasicMatrix(n, 1, std::move(values));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }
  T& operator[](std::size_t k) noexcept { return data_[k]; }
  const T& operator[](std::size_t k) const noexcept { return data_[k]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  std::span<T> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

  template <class U>
  BasicMatrix<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t k = 0; k < data_.size(); ++k) out[k] = static_cast<U>(data_[k]);
    return BasicMatrix<U>(rows_, cols_, std::move(out));
  }

  bool operator==(const BasicMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

// Same shape and identical bit patterns (distinguishes -0 from +0, NaN payloads).
template <class T>
bool bitwise_equal(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 || std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0);
}

// Convolution weight of shape (c, n, h, w) = (out channels, in channels, kernel h, kernel w).
struct Tensor4 {
  std::size_t c = 0;
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<float> data;

  Tensor4() = default;
  Tensor4(std::size_t c_, std::size_t n_, std::size_t h_, std::size_t w_, std::vector<float> values);

  float& at(std::size_t o, std::size_t i, std::size_t y, std::size_t x) noexcept {
    return data[((o * n + i) * h + y) * w + x];
  }
  float at(std::size_t o, std::size_t i, std::size_t y, std::size_t x) const noexcept {
    return data[((o * n + i) * h + y) * w + x];
  }

  bool operator==(const Tensor4&) const = default;
};

struct Tensor4Shape {
  std::size_t c = 0;
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
};

// Reduced SVD: m ~= u * diag(sigma) * v^T with u (rows x r), v (cols x r).
struct SvdFactors {
  Matrix u;
  std::vector<float> sigma;
  Matrix v;

  std::size_t rank() const noexcept { return sigma.size(); }
};

struct QrFactors {
  Matrix q;  // rows x cols, orthonormal columns
  Matrix r;  // cols x cols, upper triangular with non-negative diagonal
};

// ---- elementwise / structural kernels (templated so the autodiff replay can
// run them in double precision) ----

template <class T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  BasicMatrix<T> out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      const T* br = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

// a^T * b without materializing the transpose.
template <class T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
  BasicMatrix<T> out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const T* br = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T aki = a(k, i);
      T* o = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

// a * b^T without materializing the transpose.
template <class T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts differ");
  BasicMatrix<T> out(a.rows(), b.rows());
  const std::size_t inner = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const T* br = b.row(j).data();
      T s{};
      for (std::size_t k = 0; k < inner; ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

template <class T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a) {
  BasicMatrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <class T>
BasicMatrix<T> add(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: shape mismatch");
  BasicMatrix<T> out = a;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += b[k];
  return out;
}

// ---- reshaping ----

// (c, n, h, w) -> c x (n*h*w); column index is the row-major flat (n, h, w) index.
Matrix reshape_to_matrix(const Tensor4& t);
Tensor4 reshape_to_tensor(const Matrix& m, const Tensor4Shape& shape);

// ---- factorizations ----

QrFactors qr(const Matrix& m);

// One-sided Jacobi SVD, accumulated in double. r = min(rows, cols); sigma is
// non-increasing (ties keep column order); the largest-magnitude entry of each
// u column is positive.
SvdFactors svd(const Matrix& m);

// u * diag(sigma) * v^T, accumulated in double per entry.
Matrix reconstruct(const SvdFactors& f);

// sum_{i<k} sigma_i u_i v_i^T; 1 <= k <= rank.
Matrix rank_k_approx(const SvdFactors& f, std::size_t k);

// Gaussian fill followed by QR; column-orthonormal, deterministic per seed.
Matrix random_orthonormal(std::size_t rows, std::size_t cols, std::uint64_t seed);

// ---- diagnostics ----

// max_{ij} |(m^T m - I)_{ij}|
double gram_deviation_max(const Matrix& m);
// ||m^T m - I||_F
double gram_deviation_fro(const Matrix& m);
double frobenius_norm(const Matrix& m);
bool all_finite(const Matrix& m);

}  // namespace cacl
