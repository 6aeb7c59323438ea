#ifndef GSPPCA_SELECTION_HPP
#define GSPPCA_SELECTION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "gsppca/error.hpp"
#include "gsppca/evidence.hpp"
#include "gsppca/linalg.hpp"
#include "gsppca/parallel.hpp"
#include "gsppca/vem.hpp"

namespace gsppca {

inline constexpr double kDefaultSpeedupThreshold = 1e-8;
inline constexpr Index kSpeedupAutoMinP = 2001;

struct PathPoint {
  Index k = 0;
  double alpha_hat = std::numeric_limits<double>::quiet_NaN();  ///< NaN for k = 0
  double log_evidence = -std::numeric_limits<double>::infinity();
  bool boundary = false;
  bool valid = true;  ///< false when a row of the active block is all zero
};

struct SelectionConfig {
  VemConfig vem;
  NoiseEstimator noise = NoiseEstimator::unbiased;  ///< bias-corrected; ml is biased low when p > n
  AlphaOptions alpha;
  /// Variables with u below this are dropped before the path is built.
  /// Unset: 1e-8 when p > 2000, otherwise no filtering. 0 disables filtering.
  std::optional<double> speedup_threshold;
  int threads = 1;
};

struct SelectionResult {
  SupportVector support;
  Index q_hat = 0;
  double sigma1_hat = 0.0;
  double alpha_hat = std::numeric_limits<double>::quiet_NaN();
  std::vector<PathPoint> path;  ///< k = 0 .. k_max in order
  std::vector<Index> ranking;   ///< variables by decreasing u
  Matrix loadings;              ///< p x d, zero rows off the support
  Matrix scores;                ///< n x d
  Vector component_variances;   ///< eigenvalues of the renormalized components
  RelaxedParams relaxed;
  FreeEnergyTrace trace;
  double alpha0 = 1.0;
  double speedup_threshold = 0.0;  ///< threshold actually applied (0 = off)
  Index filtered = 0;              ///< variables removed by the speedup filter
};

/// Variables sorted by u descending; ties by sample variance descending, then index.
inline std::vector<Index> rank_variables(const Vector& u, const Vector& variances) {
  if (variances.size() != u.size()) throw ArgumentError("rank_variables: length mismatch");
  std::vector<Index> order(static_cast<std::size_t>(u.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (u(a) != u(b)) return u(a) > u(b);
    if (variances(a) != variances(b)) return variances(a) > variances(b);
    return a < b;
  });
  return order;
}

/// Supports v^(k) for k = k_min .. k_max, activating the top-k ranked variables.
inline std::vector<SupportVector> nested_models(const std::vector<Index>& ranking, Index k_min,
                                                Index k_max) {
  const Index p = static_cast<Index>(ranking.size());
  if (k_min < 1 || k_min > k_max || k_max > p)
    throw ArgumentError("nested_models: need 1 <= k_min <= k_max <= p");
  std::vector<SupportVector> out;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(p), 0);
  for (Index k = 1; k <= k_max; ++k) {
    mask[static_cast<std::size_t>(ranking[static_cast<std::size_t>(k - 1)])] = 1;
    if (k >= k_min) out.emplace_back(mask);
  }
  return out;
}

struct Renormalized {
  Matrix loadings;  ///< p x d
  Matrix scores;    ///< n x d
  Vector variances; ///< top-d' eigenvalues of X_v^T X_v / n
};

/// PCA restricted to the active columns; inactive loading rows are zero and
/// components beyond min(d, q, n) are zero columns.
inline Renormalized renormalize(const DataMatrix& x, const SupportVector& support, int d) {
  if (support.size() != x.p()) throw ArgumentError("renormalize: support length differs from p");
  if (support.q() == 0) throw ArgumentError("renormalize: empty support");
  if (d < 1) throw ArgumentError("renormalize: d must be positive");
  const auto active = support.active();
  const Matrix xv = select_columns(x.values, active);
  const int dd = static_cast<int>(std::min<Index>({d, support.q(), x.n()}));
  const auto fit = pca(xv, dd, 0.0);
  Renormalized out;
  out.loadings = Matrix::Zero(x.p(), d);
  out.scores = Matrix::Zero(x.n(), d);
  for (std::size_t r = 0; r < active.size(); ++r)
    out.loadings.row(active[r]).head(dd) = fit.loadings.row(static_cast<Index>(r));
  out.scores.leftCols(dd) = fit.scores;
  out.variances = fit.eigenvalues.head(dd);
  return out;
}

namespace detail {

// Evidence path over nested supports built from squared-row prefix sums.
inline std::vector<PathPoint> evidence_path(const Matrix& x, const std::vector<Index>& ranking,
                                            Index k_max, int d, double sigma1,
                                            const AlphaOptions& opts, int threads) {
  const Index n = x.rows(), p = x.cols();
  Matrix prefix(n, k_max + 1), suffix(n, k_max + 1);
  for (Index i = 0; i < n; ++i) {
    prefix(i, 0) = 0.0;
    for (Index k = 1; k <= k_max; ++k) {
      const double v = x(i, ranking[static_cast<std::size_t>(k - 1)]);
      prefix(i, k) = prefix(i, k - 1) + v * v;
    }
    // inactive block: ranked positions k.. plus everything never ranked
    double tail = 0.0;
    for (Index r = p - 1; r >= k_max; --r) {
      const double v = x(i, ranking[static_cast<std::size_t>(r)]);
      tail += v * v;
    }
    suffix(i, k_max) = tail;
    for (Index k = k_max - 1; k >= 0; --k) {
      const double v = x(i, ranking[static_cast<std::size_t>(k)]);
      suffix(i, k) = suffix(i, k + 1) + v * v;
    }
  }
  std::vector<PathPoint> path(static_cast<std::size_t>(k_max + 1));
  parallel_for(k_max + 1, threads, [&](std::int64_t kk) {
    const Index k = static_cast<Index>(kk);
    BlockNorms b;
    b.q = k;
    b.p = p;
    b.active_sq.resize(static_cast<std::size_t>(n));
    b.inactive_sq.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      b.active_sq[static_cast<std::size_t>(i)] = prefix(i, k);
      b.inactive_sq[static_cast<std::size_t>(i)] = suffix(i, k);
    }
    PathPoint& pt = path[static_cast<std::size_t>(k)];
    pt.k = k;
    if (k == 0) {
      pt.log_evidence = log_evidence(b, d, 1.0, sigma1);
      return;
    }
    for (double a : b.active_sq)
      if (!(a > 0.0)) {
        pt.valid = false;
        return;
      }
    const auto fit = maximize_alpha(b, d, sigma1, opts);
    pt.alpha_hat = fit.alpha_hat;
    pt.log_evidence = fit.log_evidence;
    pt.boundary = fit.boundary;
  });
  return path;
}

}  // namespace detail

/// Full pipeline: relaxed VEM fit, ranking by u, exact-evidence path over the
/// nested supports, argmax (ties go to the sparsest model), renormalization.
inline SelectionResult select_support(const DataMatrix& x, int d, const SelectionConfig& cfg = {}) {
  const Index p = x.p();
  if (d < 1 || d > std::min(x.n(), p)) throw ArgumentError("select_support: d must lie in [1, min(n, p)]");
  SelectionResult res;
  auto fit = fit_relaxed(x, d, cfg.vem);
  res.relaxed = std::move(fit.params);
  res.trace = std::move(fit.trace);
  res.alpha0 = fit.alpha0;
  res.sigma1_hat = estimate_noise_sd(x, d, cfg.noise, cfg.vem.svd, cfg.vem.seed);

  res.ranking = rank_variables(res.relaxed.u, column_variances(x));
  double thr = cfg.speedup_threshold.value_or(p >= kSpeedupAutoMinP ? kDefaultSpeedupThreshold : 0.0);
  if (!(thr >= 0.0)) throw ArgumentError("select_support: speedup threshold must be >= 0");
  Index k_max = p;
  if (thr > 0.0) {
    k_max = 0;
    while (k_max < p && res.relaxed.u(res.ranking[static_cast<std::size_t>(k_max)]) >= thr) ++k_max;
  }
  res.speedup_threshold = thr;
  res.filtered = p - k_max;

  res.path = detail::evidence_path(x.values, res.ranking, k_max, d, res.sigma1_hat, cfg.alpha,
                                   cfg.threads);
  bool any_valid = false;
  for (std::size_t k = 1; k < res.path.size(); ++k) any_valid = any_valid || res.path[k].valid;
  if (!any_valid) throw SelectionError("select_support: every model on the path is degenerate");

  std::size_t best = 0;
  for (std::size_t k = 1; k < res.path.size(); ++k)
    if (res.path[k].valid && res.path[k].log_evidence > res.path[best].log_evidence) best = k;
  res.q_hat = static_cast<Index>(best);
  res.alpha_hat = res.path[best].alpha_hat;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(p), 0);
  for (Index k = 0; k < res.q_hat; ++k) mask[static_cast<std::size_t>(res.ranking[static_cast<std::size_t>(k)])] = 1;
  res.support = SupportVector(std::move(mask));

  if (res.q_hat > 0) {
    auto r = renormalize(x, res.support, d);
    res.loadings = std::move(r.loadings);
    res.scores = std::move(r.scores);
    res.component_variances = std::move(r.variances);
  } else {
    res.loadings = Matrix::Zero(p, d);
    res.scores = Matrix::Zero(x.n(), d);
    res.component_variances = Vector();
  }
  return res;
}

}  // namespace gsppca

#endif  // GSPPCA_SELECTION_HPP
