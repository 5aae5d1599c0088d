#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cacl/linalg.hpp"

using namespace cacl;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Matrix m(rows, cols);
  for (float& x : m.storage()) x = dist(gen);
  return m;
}

// Independent double-precision reconstruction U diag(s) V^T.
MatrixD reconstruct_double(const SvdFactors& f) {
  MatrixD out(f.u.rows(), f.v.rows());
  for (std::size_t i = 0; i < f.u.rows(); ++i)
    for (std::size_t j = 0; j < f.v.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < f.sigma.size(); ++k)
        s += static_cast<double>(f.u(i, k)) * f.sigma[k] * f.v(j, k);
      out(i, j) = s;
    }
  return out;
}

double max_abs(const Matrix& m) {
  double out = 0.0;
  for (float x : m.storage()) out = std::max(out, static_cast<double>(std::abs(x)));
  return out;
}

}  // namespace

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  const Matrix b = Matrix::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(Matrix::identity(2), b), b);
}

TEST(Matmul, ZeroAnnihilates) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(a, Matrix(2, 2)), Matrix(2, 2));
}

TEST(Matmul, HandArithmetic) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{5}, {6}});
  EXPECT_EQ(matmul(a, b), Matrix::from_rows({{17}, {39}}));
}

TEST(Matmul, DimensionMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST(Matmul, TransposedVariantsAgree) {
  const Matrix a = random_matrix(4, 3, 1);
  const Matrix b = random_matrix(4, 5, 2);
  const Matrix c = random_matrix(6, 3, 3);
  const Matrix tn = matmul_tn(a, b);
  const Matrix ref_tn = matmul(transpose(a), b);
  for (std::size_t k = 0; k < tn.size(); ++k) EXPECT_NEAR(tn[k], ref_tn[k], 1e-6);
  const Matrix nt = matmul_nt(a, c);
  const Matrix ref_nt = matmul(a, transpose(c));
  for (std::size_t k = 0; k < nt.size(); ++k) EXPECT_NEAR(nt[k], ref_nt[k], 1e-6);
}

TEST(Reshape, IndexArithmetic) {
  const Tensor4 t(2, 1, 1, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(reshape_to_matrix(t), Matrix::from_rows({{1, 2, 3}, {4, 5, 6}}));
}

TEST(Reshape, ConvLayerDimensions) {
  const Tensor4 t(64, 64, 3, 3, std::vector<float>(64 * 64 * 9, 0.5f));
  const Matrix m = reshape_to_matrix(t);
  EXPECT_EQ(m.rows(), 64u);
  EXPECT_EQ(m.cols(), 576u);
}

TEST(Reshape, ElementMapping) {
  std::vector<float> data(3 * 2 * 2 * 4);
  for (std::size_t k = 0; k < data.size(); ++k) data[k] = static_cast<float>(k);
  const Tensor4 t(3, 2, 2, 4, data);
  const Matrix m = reshape_to_matrix(t);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(m(o, (i * 2 + y) * 4 + x), t.at(o, i, y, x));
}

TEST(Reshape, RoundTripRandom) {
  std::mt19937 gen(7);
  std::uniform_int_distribution<int> dim(1, 5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = dim(gen), n = dim(gen), h = dim(gen), w = dim(gen);
    std::vector<float> data(c * n * h * w);
    for (float& x : data) x = std::uniform_real_distribution<float>(-3, 3)(gen);
    const Tensor4 t(c, n, h, w, data);
    EXPECT_EQ(reshape_to_tensor(reshape_to_matrix(t), {c, n, h, w}), t);
  }
}

TEST(Reshape, ScalarTensor) {
  const Tensor4 t = reshape_to_tensor(Matrix(1, 1, 5.0f), {1, 1, 1, 1});
  EXPECT_EQ(t.data, std::vector<float>{5.0f});
}

TEST(Reshape, MismatchedColumnsThrow) {
  EXPECT_THROW(reshape_to_tensor(Matrix(2, 5), {2, 1, 2, 2}), ShapeError);
}

TEST(Qr, OrthonormalAndReconstructs) {
  const Matrix a = random_matrix(7, 4, 11);
  const QrFactors f = qr(a);
  EXPECT_LT(gram_deviation_max(f.q), 1e-6);
  const Matrix back = matmul(f.q, f.r);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(back[k], a[k], 1e-5);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_GE(f.r(i, i), 0.0f);
    for (std::size_t j = 0; j < i; ++j) EXPECT_EQ(f.r(i, j), 0.0f);
  }
}

TEST(Svd, DiagonalMatrix) {
  const SvdFactors f = svd(Matrix::from_rows({{3, 0}, {0, 2}}));
  ASSERT_EQ(f.sigma.size(), 2u);
  EXPECT_NEAR(f.sigma[0], 3.0f, 1e-6);
  EXPECT_NEAR(f.sigma[1], 2.0f, 1e-6);
  // Sign convention makes both U and V the identity here.
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_NEAR(f.u(i, j), i == j ? 1.0f : 0.0f, 1e-6);
      EXPECT_NEAR(f.v(i, j), i == j ? 1.0f : 0.0f, 1e-6);
    }
}

TEST(Svd, RandomReconstruction) {
  const Matrix a = random_matrix(5, 3, 42);
  const SvdFactors f = svd(a);
  ASSERT_EQ(f.rank(), 3u);
  const MatrixD back = reconstruct_double(f);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LE(std::abs(back[k] - a[k]), 1e-4 * std::max(1.0, max_abs(a)));
  EXPECT_LE(gram_deviation_max(f.u), 1e-5);
  EXPECT_LE(gram_deviation_max(f.v), 1e-5);
}

TEST(Svd, RankOneOuterProduct) {
  std::mt19937 gen(3);
  std::normal_distribution<double> g;
  std::vector<double> u(6), v(3);
  for (double& x : u) x = g(gen);
  for (double& x : v) x = g(gen);
  auto normalize = [](std::vector<double>& x) {
    double s = 0;
    for (double e : x) s += e * e;
    for (double& e : x) e /= std::sqrt(s);
  };
  normalize(u);
  normalize(v);
  Matrix a(6, 3);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 3; ++j) a(i, j) = static_cast<float>(u[i] * v[j]);
  const SvdFactors f = svd(a);
  EXPECT_NEAR(f.sigma[0], 1.0f, 1e-5);
  EXPECT_LT(f.sigma[1], 1e-5f);
  EXPECT_LT(f.sigma[2], 1e-5f);
  EXPECT_LE(gram_deviation_max(f.u), 1e-5);
  EXPECT_LE(gram_deviation_max(f.v), 1e-5);
}

TEST(Svd, WideMatrixAndZeroMatrix) {
  const Matrix wide = random_matrix(3, 8, 5);
  const SvdFactors f = svd(wide);
  EXPECT_EQ(f.u.rows(), 3u);
  EXPECT_EQ(f.v.rows(), 8u);
  EXPECT_EQ(f.rank(), 3u);
  const MatrixD back = reconstruct_double(f);
  for (std::size_t k = 0; k < wide.size(); ++k) EXPECT_NEAR(back[k], wide[k], 1e-5);

  const SvdFactors z = svd(Matrix(4, 3));
  for (float s : z.sigma) EXPECT_EQ(s, 0.0f);
  EXPECT_LE(gram_deviation_max(z.u), 1e-5);
  EXPECT_LE(gram_deviation_max(z.v), 1e-5);
}

TEST(Svd, SortedNonNegativeWithSignConvention) {
  for (std::uint32_t seed = 0; seed < 20; ++seed) {
    const SvdFactors f = svd(random_matrix(4 + seed % 5, 2 + seed % 7, seed));
    for (std::size_t k = 0; k + 1 < f.sigma.size(); ++k) EXPECT_GE(f.sigma[k], f.sigma[k + 1]);
    for (std::size_t k = 0; k < f.sigma.size(); ++k) {
      EXPECT_GE(f.sigma[k], 0.0f);
      float best = 0.0f;
      for (std::size_t i = 0; i < f.u.rows(); ++i)
        if (std::abs(f.u(i, k)) > std::abs(best)) best = f.u(i, k);
      EXPECT_GT(best, 0.0f);
    }
  }
}

TEST(Svd, NonFiniteInputThrows) {
  Matrix a(2, 2, 1.0f);
  a(0, 1) = std::nanf("");
  EXPECT_THROW(svd(a), NumericError);
  a(0, 1) = INFINITY;
  EXPECT_THROW(svd(a), NumericError);
}

TEST(Svd, Deterministic) {
  const Matrix a = random_matrix(9, 6, 77);
  const SvdFactors f1 = svd(a);
  const SvdFactors f2 = svd(a);
  EXPECT_TRUE(bitwise_equal(f1.u, f2.u));
  EXPECT_TRUE(bitwise_equal(f1.v, f2.v));
  EXPECT_EQ(f1.sigma, f2.sigma);
}

TEST(RankK, FullRankIsReconstruction) {
  const SvdFactors f = svd(random_matrix(5, 4, 8));
  EXPECT_TRUE(bitwise_equal(rank_k_approx(f, 4), reconstruct(f)));
}

TEST(RankK, HandTwoByTwo) {
  const SvdFactors f = svd(Matrix::from_rows({{2, 0}, {0, 1}}));
  const Matrix a1 = rank_k_approx(f, 1);
  EXPECT_NEAR(a1(0, 0), 2.0f, 1e-6);
  EXPECT_NEAR(a1(0, 1), 0.0f, 1e-6);
  EXPECT_NEAR(a1(1, 0), 0.0f, 1e-6);
  EXPECT_NEAR(a1(1, 1), 0.0f, 1e-6);
  const Matrix full = reconstruct(f);
  double err = 0.0;
  for (std::size_t k = 0; k < 4; ++k) err += std::pow(static_cast<double>(full[k]) - a1[k], 2);
  EXPECT_NEAR(err, 1.0, 1e-6);
}

TEST(RankK, ErrorIdentityRandom) {
  const SvdFactors f = svd(random_matrix(6, 4, 99));
  const Matrix full = reconstruct(f);
  for (std::size_t k = 1; k <= 4; ++k) {
    const Matrix ak = rank_k_approx(f, k);
    double err = 0.0;
    for (std::size_t e = 0; e < full.size(); ++e) err += std::pow(static_cast<double>(full[e]) - ak[e], 2);
    double tail = 0.0;
    for (std::size_t i = k; i < 4; ++i) tail += static_cast<double>(f.sigma[i]) * f.sigma[i];
    if (tail == 0.0)
      EXPECT_LT(err, 1e-12);
    else
      EXPECT_NEAR(err / tail, 1.0, 1e-6) << "k=" << k;
  }
}

TEST(RankK, OutOfRangeThrows) {
  const SvdFactors f = svd(random_matrix(3, 3, 1));
  EXPECT_THROW(rank_k_approx(f, 0), ArgumentError);
  EXPECT_THROW(rank_k_approx(f, 4), ArgumentError);
}

TEST(RandomOrthonormal, SquareIsOrthogonal) {
  const Matrix q = random_orthonormal(3, 3, 5);
  EXPECT_LE(gram_deviation_max(q), 1e-5);
}

TEST(RandomOrthonormal, SameSeedSameOutput) {
  EXPECT_TRUE(bitwise_equal(random_orthonormal(6, 4, 123), random_orthonormal(6, 4, 123)));
  EXPECT_FALSE(bitwise_equal(random_orthonormal(6, 4, 123), random_orthonormal(6, 4, 124)));
}

TEST(RandomOrthonormal, TallColumnsUnitAndOrthogonal) {
  const Matrix q = random_orthonormal(5, 2, 9);
  double n0 = 0, n1 = 0, d = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    n0 += q(i, 0) * q(i, 0);
    n1 += q(i, 1) * q(i, 1);
    d += q(i, 0) * q(i, 1);
  }
  EXPECT_NEAR(n0, 1.0, 1e-5);
  EXPECT_NEAR(n1, 1.0, 1e-5);
  EXPECT_NEAR(d, 0.0, 1e-5);
}

TEST(RandomOrthonormal, WideRequestThrows) {
  EXPECT_THROW(random_orthonormal(2, 3, 0), ArgumentError);
}
