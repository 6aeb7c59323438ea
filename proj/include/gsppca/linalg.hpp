#ifndef GSPPCA_LINALG_HPP
#define GSPPCA_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "gsppca/error.hpp"
#include "gsppca/random.hpp"

namespace gsppca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// n x p observation matrix (rows are observations) with centering metadata.
struct DataMatrix {
  Matrix values;
  Vector column_means;  ///< means removed by center(); zeros otherwise
  bool centered = false;

  Index n() const { return values.rows(); }
  Index p() const { return values.cols(); }
};

namespace detail {

inline void validate_values(const Matrix& values) {
  if (values.rows() < 2)
    throw DataError("data matrix needs at least 2 observations, got " +
                    std::to_string(values.rows()));
  if (values.cols() < 1) throw DataError("data matrix needs at least 1 variable");
  if (!values.allFinite()) throw DataError("data matrix contains non-finite entries");
}

// Flip column signs so the largest-magnitude entry of each column is positive.
inline void normalize_signs(Matrix& vectors, Matrix* partner = nullptr) {
  for (Index j = 0; j < vectors.cols(); ++j) {
    Index arg = 0;
    vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, j) < 0.0) {
      vectors.col(j) *= -1.0;
      if (partner) partner->col(j) *= -1.0;
    }
  }
}

inline Matrix orthonormal_basis(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
}

}  // namespace detail

/// Wrap a matrix without centering it.
inline DataMatrix as_data(Matrix values) {
  detail::validate_values(values);
  DataMatrix out;
  out.column_means = Vector::Zero(values.cols());
  out.values = std::move(values);
  return out;
}

/// Subtract column means; no scaling.
inline DataMatrix center(const Matrix& values) {
  detail::validate_values(values);
  DataMatrix out;
  out.column_means = values.colwise().mean().transpose();
  out.values = values.rowwise() - out.column_means.transpose();
  out.centered = true;
  return out;
}

/// Per-variable sample variances (denominator n - 1).
inline Vector column_variances(const DataMatrix& x) {
  const Matrix c = x.values.rowwise() - x.values.colwise().mean();
  return c.colwise().squaredNorm().transpose() / static_cast<double>(x.n() - 1);
}

/// Columns of x selected by a list of indices, in the given order.
template <typename Indices>
Matrix select_columns(const Matrix& x, const Indices& cols) {
  Matrix out(x.rows(), static_cast<Index>(cols.size()));
  Index j = 0;
  for (auto c : cols) out.col(j++) = x.col(static_cast<Index>(c));
  return out;
}

enum class SvdMethod { exact, randomized };

struct SVDResult {
  Matrix left_vectors;     ///< n x k, orthonormal columns
  Vector singular_values;  ///< length k, non-increasing
  Matrix right_vectors;    ///< p x k, orthonormal columns
};

inline constexpr int kSvdOversampling = 10;
inline constexpr int kSvdPowerIterations = 2;
inline constexpr std::uint64_t kSvdStream = 0x5356440000000001ULL;

/// Top-k singular triplets.
///
/// The randomized method uses a Gaussian sketch with 10 extra columns and two
/// power iterations; when the sketch would not be smaller than min(n, p) it
/// falls back to the exact decomposition.
inline SVDResult truncated_svd(const Matrix& x, int k, SvdMethod method = SvdMethod::exact,
                               std::uint64_t seed = 0) {
  const Index m = std::min(x.rows(), x.cols());
  if (k < 1 || k > m)
    throw ArgumentError("truncated_svd: k must lie in [1, min(n, p)], got " + std::to_string(k));
  SVDResult out;
  const Index sketch = k + kSvdOversampling;
  if (method == SvdMethod::exact || sketch >= m) {
    Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.left_vectors = svd.matrixU().leftCols(k);
    out.singular_values = svd.singularValues().head(k);
    out.right_vectors = svd.matrixV().leftCols(k);
  } else {
    Rng rng(seed, kSvdStream);
    Matrix omega(x.cols(), sketch);
    for (Index i = 0; i < omega.rows(); ++i)
      for (Index j = 0; j < sketch; ++j) omega(i, j) = rng.normal();
    Matrix q = detail::orthonormal_basis(x * omega);
    for (int it = 0; it < kSvdPowerIterations; ++it) {
      const Matrix z = detail::orthonormal_basis(x.transpose() * q);
      q = detail::orthonormal_basis(x * z);
    }
    const Matrix b = q.transpose() * x;
    Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.left_vectors = q * svd.matrixU().leftCols(k);
    out.singular_values = svd.singularValues().head(k);
    out.right_vectors = svd.matrixV().leftCols(k);
  }
  detail::normalize_signs(out.right_vectors, &out.left_vectors);
  return out;
}

inline SVDResult truncated_svd(const DataMatrix& x, int k, SvdMethod method = SvdMethod::exact,
                               std::uint64_t seed = 0) {
  return truncated_svd(x.values, k, method, seed);
}

/// Eigen-decomposition of X^T X / n restricted to its top min(n, p) pairs,
/// computed on the smaller Gram matrix.
struct GramEigen {
  Vector values;  ///< descending, length min(n, p), clamped at 0
  Matrix axes;    ///< p x min(n, p) unit eigenvectors of X^T X / n (zero for null directions)
};

inline GramEigen gram_eigen(const Matrix& x) {
  const Index n = x.rows(), p = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  GramEigen out;
  if (n >= p) {
    Eigen::SelfAdjointEigenSolver<Matrix> es((x.transpose() * x) * inv_n);
    if (es.info() != Eigen::Success) throw NumericalError("gram_eigen: eigensolver failed");
    out.values = es.eigenvalues().reverse().cwiseMax(0.0);
    out.axes = es.eigenvectors().rowwise().reverse();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es((x * x.transpose()) * inv_n);
    if (es.info() != Eigen::Success) throw NumericalError("gram_eigen: eigensolver failed");
    out.values = es.eigenvalues().reverse().cwiseMax(0.0);
    const Matrix left = es.eigenvectors().rowwise().reverse();
    out.axes = Matrix::Zero(p, n);
    const double tol = 1e-12 * std::max(out.values(0), 1e-300);
    for (Index j = 0; j < n; ++j) {
      if (out.values(j) <= tol) {
        out.values(j) = std::max(out.values(j), 0.0);
        continue;
      }
      out.axes.col(j) = x.transpose() * left.col(j) / std::sqrt(n * out.values(j));
    }
  }
  detail::normalize_signs(out.axes);
  return out;
}

struct PcaResult {
  Matrix loadings;     ///< p x d, A (Lambda - sigma^2 I)^{1/2}
  Matrix scores;       ///< n x d, X A
  Matrix axes;         ///< p x d, A
  Vector eigenvalues;  ///< all min(n, p) eigenvalues of X^T X / n
};

/// PCA through the probabilistic-PCA maximum-likelihood loadings
/// W = A (Lambda - sigma^2 I)^{1/2}. sigma = 0 gives scaled principal axes.
inline PcaResult pca(const Matrix& x, int d, double sigma = 0.0) {
  const Index m = std::min(x.rows(), x.cols());
  if (d < 1 || d > m) throw ArgumentError("pca: d must lie in [1, min(n, p)]");
  if (!(sigma >= 0.0)) throw ArgumentError("pca: sigma must be non-negative");
  auto eig = gram_eigen(x);
  const double s2 = sigma * sigma;
  if (sigma > 0.0 && !(s2 < eig.values(d - 1)))
    throw DegenerateNoiseError("pca: sigma^2 must be below the d-th eigenvalue");
  PcaResult out;
  out.axes = eig.axes.leftCols(d);
  out.loadings = out.axes * (eig.values.head(d).array() - s2).sqrt().matrix().asDiagonal();
  out.scores = x * out.axes;
  out.eigenvalues = std::move(eig.values);
  return out;
}

inline PcaResult pca(const DataMatrix& x, int d, double sigma = 0.0) {
  return pca(x.values, d, sigma);
}

}  // namespace gsppca

#endif  // GSPPCA_LINALG_HPP
