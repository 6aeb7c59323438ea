#ifndef GSPPCA_SIMULATE_HPP
#define GSPPCA_SIMULATE_HPP

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "gsppca/error.hpp"
#include "gsppca/evidence.hpp"
#include "gsppca/linalg.hpp"
#include "gsppca/random.hpp"

namespace gsppca {

enum class Scenario { intro, snr, blocks };
enum class NoiseKind { gaussian, laplace };

inline constexpr int kBlockCount = 4;
inline constexpr double kBlockDiagonal = 0.3;
inline constexpr double kBlockRho = 0.25;

struct ScenarioSpec {
  Scenario scenario = Scenario::intro;
  Index n = 50;
  Index p = 30;
  int d = 5;
  Index q = 10;
  double sigma = std::sqrt(0.1);  ///< noise sd (intro); derived from snr for the snr scenario
  double snr = 1.0;
  double rho = kBlockRho;                 ///< within-block correlation (blocks)
  double block_diagonal = kBlockDiagonal; ///< diagonal of each block (blocks)
  NoiseKind noise = NoiseKind::gaussian;
  std::uint64_t seed = 0;

  static ScenarioSpec defaults(Scenario s) {
    ScenarioSpec spec;
    spec.scenario = s;
    if (s == Scenario::snr) {
      spec.n = 40;
      spec.p = 200;
      spec.d = 10;
      spec.q = 20;
      spec.snr = 1.0;
    } else if (s == Scenario::blocks) {
      spec.p = 200;
      spec.n = spec.p / 3;
      spec.d = 10;
      spec.q = 20;
      spec.sigma = 1.0;
    }
    return spec;
  }

  void validate() const {
    if (n < 2 || p < 1) throw ArgumentError("scenario: need n >= 2 and p >= 1");
    if (q < 0 || q > p) throw ArgumentError("scenario: q must lie in [0, p]");
    if (d < 1 || d > std::min(n, p)) throw ArgumentError("scenario: d must lie in [1, min(n, p)]");
    if (scenario == Scenario::snr && !(snr > 0.0)) throw ArgumentError("scenario: snr must be positive");
    if (scenario != Scenario::snr && !(sigma > 0.0)) throw ArgumentError("scenario: sigma must be positive");
    if (scenario == Scenario::blocks) {
      if (p % kBlockCount != 0) throw ArgumentError("scenario: p must be divisible by 4");
      if (!(rho > -1.0 && rho < 1.0)) throw ArgumentError("scenario: rho must lie in (-1, 1)");
      if (!(block_diagonal > 0.0)) throw ArgumentError("scenario: block diagonal must be positive");
    }
  }
};

struct SimulatedData {
  Matrix x;            ///< n x p, not centered
  SupportVector truth; ///< ones on the first q coordinates
  Matrix loadings;     ///< p x d, V W (zero rows off the support)
  double sigma = 0.0;  ///< noise sd actually used
};

/// SNR = d q / (p sigma^2).
inline double snr_value(double d, double q, double p, double sigma) {
  if (!(d > 0 && q > 0 && p > 0 && sigma > 0)) throw ArgumentError("snr_value: arguments must be positive");
  return d * q / (p * sigma * sigma);
}

inline double sigma_for_snr(double d, double q, double p, double snr) {
  if (!(d > 0 && q > 0 && p > 0 && snr > 0)) throw ArgumentError("sigma_for_snr: arguments must be positive");
  return std::sqrt(d * q / (p * snr));
}

namespace detail {

inline constexpr std::uint64_t kStreamLoadings = 1;
inline constexpr std::uint64_t kStreamLatent = 2;
inline constexpr std::uint64_t kStreamNoise = 3;
inline constexpr std::uint64_t kStreamBlocks = 4;

inline SupportVector leading_support(Index p, Index q) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(p), 0);
  for (Index j = 0; j < q; ++j) mask[static_cast<std::size_t>(j)] = 1;
  return SupportVector(std::move(mask));
}

inline Matrix normal_matrix(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

inline Matrix noise_matrix(Rng& rng, Index rows, Index cols, NoiseKind kind, double sd) {
  if (kind == NoiseKind::gaussian) return sd * normal_matrix(rng, rows, cols);
  Matrix m(rows, cols);
  const double scale = sd / std::sqrt(2.0);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.laplace(scale);
  return m;
}

// X = Y (V W)^T + E, rows drawn independently.
inline Matrix mix(Rng& latent, Rng& noise, const Matrix& vw, Index n, NoiseKind kind, double sd) {
  const Matrix y = normal_matrix(latent, n, vw.cols());
  return y * vw.transpose() + noise_matrix(noise, n, vw.rows(), kind, sd);
}

}  // namespace detail

/// Data from the globally sparse PPCA model with standard Gaussian loadings
/// on the first q variables (intro and snr scenarios).
inline SimulatedData gen_gsppca_data(const ScenarioSpec& spec) {
  spec.validate();
  if (spec.scenario == Scenario::blocks) throw ArgumentError("gen_gsppca_data: use gen_block_data");
  const double sd = spec.scenario == Scenario::snr
                        ? sigma_for_snr(spec.d, static_cast<double>(spec.q),
                                        static_cast<double>(spec.p), spec.snr)
                        : spec.sigma;
  Rng rw(spec.seed, detail::kStreamLoadings), ry(spec.seed, detail::kStreamLatent),
      re(spec.seed, detail::kStreamNoise);
  SimulatedData out;
  out.sigma = sd;
  out.truth = detail::leading_support(spec.p, spec.q);
  out.loadings = Matrix::Zero(spec.p, spec.d);
  out.loadings.topRows(spec.q) = detail::normal_matrix(rw, spec.q, spec.d);
  out.x = detail::mix(ry, re, out.loadings, spec.n, spec.noise, sd);
  return out;
}

namespace detail {

/// n draws of z ~ N(0, R) for the blocks scenario.
inline Matrix sample_block_latent(const ScenarioSpec& spec) {
  const Index p = spec.p, m = p / kBlockCount;
  const double lo = spec.block_diagonal - spec.rho;
  const double hi = spec.block_diagonal + static_cast<double>(m - 1) * spec.rho;
  if (lo < 0.0 || hi < 0.0)
    throw ArgumentError("gen_block_data: block correlation matrix is not positive semidefinite (rho = " +
                        std::to_string(spec.rho) + ")");

  // Symmetric square root of an equicorrelated block: sqrt(lo) I + c 11^T.
  const double c = (std::sqrt(hi) - std::sqrt(lo)) / static_cast<double>(m);
  Rng rz(spec.seed, kStreamBlocks);
  const Matrix g = normal_matrix(rz, spec.n, p);
  Matrix z(spec.n, p);
  for (Index b = 0; b < kBlockCount; ++b) {
    const auto blk = g.middleCols(b * m, m);
    const Vector rowsum = blk.rowwise().sum();
    z.middleCols(b * m, m) = std::sqrt(lo) * blk + c * rowsum.replicate(1, m);
  }
  return z;
}

}  // namespace detail

/// Block-covariance scenario: z_i ~ N(0, R) with R made of 4 equicorrelated
/// blocks, a PPCA fit on z gives W_ML, and x_i = V W_ML y_i + eps_i with unit
/// noise variance (Gaussian, or Laplace with scale 1/sqrt(2)).
///
/// R is validated through its block eigenvalues (diag - rho and
/// diag + (m - 1) rho) and sampled with its symmetric square root, so
/// singular but PSD matrices are accepted.
inline SimulatedData gen_block_data(const ScenarioSpec& spec) {
  spec.validate();
  if (spec.scenario != Scenario::blocks) throw ArgumentError("gen_block_data: blocks scenario required");
  const Index p = spec.p;
  const Matrix z = detail::sample_block_latent(spec);

  const auto eig = gram_eigen(z);
  const Index k = std::min<Index>(spec.n, p);
  const double s2 = spec.d < k
                        ? std::max(0.0, (eig.values.sum() - eig.values.head(spec.d).sum()) /
                                            static_cast<double>(p - spec.d))
                        : 0.0;
  const Vector scale = (eig.values.head(spec.d).array() - s2).cwiseMax(0.0).sqrt();
  Matrix w = eig.axes.leftCols(spec.d) * scale.asDiagonal();
  w.bottomRows(p - spec.q).setZero();

  Rng ry(spec.seed, detail::kStreamLatent), re(spec.seed, detail::kStreamNoise);
  SimulatedData out;
  out.sigma = 1.0;
  out.truth = detail::leading_support(p, spec.q);
  out.loadings = std::move(w);
  out.x = detail::mix(ry, re, out.loadings, spec.n, spec.noise, 1.0);
  return out;
}

inline SimulatedData simulate(const ScenarioSpec& spec) {
  return spec.scenario == Scenario::blocks ? gen_block_data(spec) : gen_gsppca_data(spec);
}

/// count draws of A b with A (q x d) entries N(0, s^2) and b ~ N(0, I_d).
inline Matrix sample_gaussian_matrix_vector(Index q, int d, double s, Index count,
                                            std::uint64_t seed) {
  if (q < 1 || d < 1 || !(s > 0.0) || count < 1)
    throw ArgumentError("sample_gaussian_matrix_vector: arguments must be positive");
  Rng rng(seed, 0x4c454d4d41000007ULL);
  Matrix out(count, q);
  Vector b(d);
  for (Index t = 0; t < count; ++t) {
    for (int j = 0; j < d; ++j) b(j) = rng.normal();
    for (Index r = 0; r < q; ++r) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) acc += rng.normal() * b(j);
      out(t, r) = s * acc;
    }
  }
  return out;
}

}  // namespace gsppca

#endif  // GSPPCA_SIMULATE_HPP
