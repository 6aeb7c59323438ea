#include <cmath>

#include <catch_amalgamated.hpp>

#include "gsppca/linalg.hpp"
#include "gsppca/random.hpp"

using namespace gsppca;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Matrix gaussian(Index n, Index p, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) m(i, j) = rng.normal();
  return m;
}

double orthonormality_error(const Matrix& q) {
  return (q.transpose() * q - Matrix::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("center subtracts column means", "[linalg]") {
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  const auto c = center(a);
  Matrix expect(2, 2);
  expect << -1, -1, 1, 1;
  CHECK(c.values == expect);
  CHECK(c.column_means == Vector::Map(std::vector<double>{2, 3}.data(), 2));
  CHECK(c.centered);

  const auto again = center(c.values);
  CHECK(again.values == c.values);

  const auto r = center(gaussian(50, 30, 1) * 3.0 + Matrix::Constant(50, 30, 7.0));
  CHECK(r.values.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("data validation", "[linalg]") {
  CHECK_THROWS_AS(center(Matrix::Zero(1, 3)), DataError);
  CHECK_THROWS_AS(center(Matrix::Zero(3, 0)), DataError);
  Matrix bad = Matrix::Zero(3, 2);
  bad(1, 1) = NAN;
  CHECK_THROWS_AS(center(bad), DataError);
  bad(1, 1) = INFINITY;
  CHECK_THROWS_AS(as_data(bad), DataError);
}

TEST_CASE("truncated_svd trivial cases", "[linalg]") {
  const auto id = truncated_svd(Matrix::Identity(4, 4), 2);
  CHECK_THAT(id.singular_values(0), WithinAbs(1.0, 1e-14));
  CHECK_THAT(id.singular_values(1), WithinAbs(1.0, 1e-14));

  Matrix d = Matrix::Zero(5, 3);
  d(0, 0) = 3;
  d(1, 1) = 2;
  d(2, 2) = 1;
  const auto s = truncated_svd(d, 2);
  CHECK_THAT(s.singular_values(0), WithinAbs(3.0, 1e-14));
  CHECK_THAT(s.singular_values(1), WithinAbs(2.0, 1e-14));
  CHECK_THROWS_AS(truncated_svd(d, 0), ArgumentError);
  CHECK_THROWS_AS(truncated_svd(d, 4), ArgumentError);
}

TEST_CASE("truncated_svd invariants", "[linalg]") {
  const Matrix x = gaussian(40, 60, 2);
  const auto full = truncated_svd(x, 40);
  for (int k : {1, 5, 17}) {
    const auto s = truncated_svd(x, k);
    CHECK(orthonormality_error(s.left_vectors) < 1e-8);
    CHECK(orthonormality_error(s.right_vectors) < 1e-8);
    for (Index j = 1; j < k; ++j) CHECK(s.singular_values(j) <= s.singular_values(j - 1));
    CHECK(s.singular_values.minCoeff() >= 0.0);
    const Matrix resid = x - s.left_vectors * s.singular_values.asDiagonal() * s.right_vectors.transpose();
    const double tail = full.singular_values.tail(40 - k).squaredNorm();
    CHECK_THAT(resid.squaredNorm(), WithinRel(tail, 1e-8));
  }
}

TEST_CASE("randomized SVD matches the exact method on a decaying spectrum", "[linalg]") {
  // 40 x 60 with singular values 2^{-j/2}: the sketch (k + 10 columns, two
  // power iterations) resolves the top 5 to far better than 1e-6.
  const Matrix u = truncated_svd(gaussian(40, 40, 3), 40).left_vectors;
  const Matrix v = truncated_svd(gaussian(60, 40, 4), 40).left_vectors;
  Vector s(40);
  for (int j = 0; j < 40; ++j) s(j) = std::pow(2.0, -0.5 * j) * 10.0;
  const Matrix x = u * s.asDiagonal() * v.transpose();
  const auto exact = truncated_svd(x, 5, SvdMethod::exact);
  const auto rnd = truncated_svd(x, 5, SvdMethod::randomized, 77);
  for (int j = 0; j < 5; ++j) CHECK_THAT(rnd.singular_values(j), WithinRel(exact.singular_values(j), 1e-6));
  CHECK(orthonormality_error(rnd.right_vectors) < 1e-8);
  // signs normalized identically
  CHECK((rnd.right_vectors - exact.right_vectors).cwiseAbs().maxCoeff() < 1e-4);

  const auto again = truncated_svd(x, 5, SvdMethod::randomized, 77);
  CHECK(again.singular_values == rnd.singular_values);
}

TEST_CASE("randomized SVD on an unstructured Gaussian matrix", "[linalg]") {
  // Flat spectrum: the sketch is close but not at 1e-6 (see the decaying case).
  const Matrix x = gaussian(40, 60, 5);
  const auto exact = truncated_svd(x, 5, SvdMethod::exact);
  const auto rnd = truncated_svd(x, 5, SvdMethod::randomized, 1);
  for (int j = 0; j < 5; ++j) CHECK_THAT(rnd.singular_values(j), WithinRel(exact.singular_values(j), 0.05));
}

TEST_CASE("pca loadings, scores and eigenvalues", "[linalg]") {
  const auto x = center(gaussian(30, 10, 6));
  const auto r = pca(x, 3);
  const Matrix ltl = r.loadings.transpose() * r.loadings;
  CHECK((ltl - Matrix(ltl.diagonal().asDiagonal())).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(r.eigenvalues.size() == 10);

  // rank-3 reconstruction error = n * sum of trailing eigenvalues
  const Matrix proj = r.scores * r.axes.transpose();
  CHECK_THAT((x.values - proj).squaredNorm(), WithinRel(30.0 * r.eigenvalues.tail(7).sum(), 1e-10));

  // idempotent projection
  const Matrix again = (proj * r.axes) * r.axes.transpose();
  CHECK((again - proj).cwiseAbs().maxCoeff() < 1e-10);

  // loadings^2 = eigenvalues - sigma^2
  const auto rs = pca(x, 3, 0.1);
  for (int j = 0; j < 3; ++j)
    CHECK_THAT(rs.loadings.col(j).squaredNorm(), WithinRel(r.eigenvalues(j) - 0.01, 1e-10));
}

TEST_CASE("pca on exactly low-rank data", "[linalg]") {
  const Matrix x = gaussian(20, 2, 7) * gaussian(2, 8, 8);
  const auto r = pca(x, 2);
  CHECK(r.eigenvalues.tail(6).cwiseAbs().maxCoeff() < 1e-10 * r.eigenvalues(0));
  CHECK_THROWS_AS(pca(x, 3, 0.5), DegenerateNoiseError);
}

TEST_CASE("pca uses the smaller Gram matrix consistently", "[linalg]") {
  const Matrix wide = gaussian(12, 40, 9), tall = wide.transpose();
  const auto a = gram_eigen(wide), b = gram_eigen(tall);
  CHECK(a.values.size() == 12);
  CHECK(b.values.size() == 12);
  const Matrix direct = wide.transpose() * wide / 12.0;
  for (int j = 0; j < 12; ++j) {
    const Vector v = a.axes.col(j);
    CHECK((direct * v - a.values(j) * v).norm() < 1e-10 * a.values(0));
  }
}

TEST_CASE("column variances", "[linalg]") {
  Matrix a(3, 2);
  a << 1, 0, 2, 0, 3, 6;
  const auto v = column_variances(as_data(a));
  CHECK_THAT(v(0), WithinAbs(1.0, 1e-15));
  CHECK_THAT(v(1), WithinAbs(12.0, 1e-14));
}
