#ifndef GSPPCA_EVIDENCE_HPP
#define GSPPCA_EVIDENCE_HPP

// Exact noiseless marginal log-likelihood of a globally sparse PPCA model.
//
// For a support v with q active variables, latent dimension d, slab precision
// alpha (w_ij ~ N(0, 1/alpha^2)) and inactive-noise sd sigma1, each row
// contributes
//   ln N(x_{i,~v} | 0, sigma1^2 I_{p-q}) + ln Bessel(x_{i,v} | 1/alpha, (d-q)/2)
// where Bessel is the symmetric multivariate Bessel density on R^q.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "gsppca/error.hpp"
#include "gsppca/linalg.hpp"
#include "gsppca/special.hpp"

namespace gsppca {

/// Binary mask over the p variables; q = number of ones.
class SupportVector {
public:
  SupportVector() = default;

  explicit SupportVector(std::vector<std::uint8_t> mask) : mask_(std::move(mask)) {
    for (auto m : mask_) {
      if (m > 1) throw ArgumentError("SupportVector: mask entries must be 0 or 1");
      q_ += m;
    }
  }

  static SupportVector none(Index p) {
    return SupportVector(std::vector<std::uint8_t>(static_cast<std::size_t>(p), 0));
  }
  static SupportVector all(Index p) {
    return SupportVector(std::vector<std::uint8_t>(static_cast<std::size_t>(p), 1));
  }
  template <typename Indices>
  static SupportVector from_indices(Index p, const Indices& active) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(p), 0);
    for (auto j : active) {
      if (j < 0 || static_cast<Index>(j) >= p)
        throw ArgumentError("SupportVector: index out of range");
      mask[static_cast<std::size_t>(j)] = 1;
    }
    return SupportVector(std::move(mask));
  }

  Index size() const { return static_cast<Index>(mask_.size()); }
  Index q() const { return q_; }
  bool operator[](Index j) const { return mask_[static_cast<std::size_t>(j)] != 0; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

  std::vector<Index> active() const { return indices(1); }
  std::vector<Index> inactive() const { return indices(0); }

  SupportVector complement() const {
    std::vector<std::uint8_t> c(mask_.size());
    for (std::size_t j = 0; j < mask_.size(); ++j) c[j] = static_cast<std::uint8_t>(1 - mask_[j]);
    return SupportVector(std::move(c));
  }

  bool operator==(const SupportVector& other) const { return mask_ == other.mask_; }

private:
  std::vector<Index> indices(std::uint8_t value) const {
    std::vector<Index> out;
    for (std::size_t j = 0; j < mask_.size(); ++j)
      if (mask_[j] == value) out.push_back(static_cast<Index>(j));
    return out;
  }

  std::vector<std::uint8_t> mask_;
  Index q_ = 0;
};

struct EvidenceModel {
  SupportVector support;
  double alpha = 1.0;   ///< slab precision, w_ij ~ N(0, 1/alpha^2)
  double sigma1 = 1.0;  ///< sd of the inactive variables
  int latent_dim = 1;
};

namespace detail {

/// Sum in a fixed pairwise order; the result depends only on the sequence.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

/// Squared norms of the active and inactive blocks of every row.
struct BlockNorms {
  std::vector<double> active_sq;
  std::vector<double> inactive_sq;
  Index q = 0;
  Index p = 0;
};

// Summing sorted squares makes the result invariant to column permutations.
inline double sorted_sum_squares(std::vector<double>& buf) {
  for (double& v : buf) v *= v;
  std::sort(buf.begin(), buf.end());
  double s = 0.0;
  for (double v : buf) s += v;
  return s;
}

inline BlockNorms block_norms(const Matrix& x, const SupportVector& v) {
  BlockNorms out;
  out.p = x.cols();
  out.q = v.q();
  out.active_sq.resize(static_cast<std::size_t>(x.rows()));
  out.inactive_sq.resize(static_cast<std::size_t>(x.rows()));
  std::vector<double> act, inact;
  act.reserve(static_cast<std::size_t>(v.q()));
  inact.reserve(static_cast<std::size_t>(x.cols() - v.q()));
  for (Index i = 0; i < x.rows(); ++i) {
    act.clear();
    inact.clear();
    for (Index j = 0; j < x.cols(); ++j) (v[j] ? act : inact).push_back(x(i, j));
    out.active_sq[static_cast<std::size_t>(i)] = sorted_sum_squares(act);
    out.inactive_sq[static_cast<std::size_t>(i)] = sorted_sum_squares(inact);
  }
  return out;
}

inline void check_rows(const BlockNorms& b) {
  if (b.q == 0) return;
  for (std::size_t i = 0; i < b.active_sq.size(); ++i)
    if (!(b.active_sq[i] > 0.0))
      throw DegenerateRowError(i, "evidence: row " + std::to_string(i) +
                                      " has an all-zero active block");
}

inline double gaussian_row_term(double inactive_sq, Index inactive, double sigma1) {
  if (inactive == 0) return 0.0;
  const double s2 = sigma1 * sigma1;
  return -0.5 * static_cast<double>(inactive) * std::log(2.0 * std::numbers::pi * s2) -
         inactive_sq / (2.0 * s2);
}

// ln of the multivariate Bessel normalizing factor with beta = 1/alpha,
// nu = (d - q)/2, dimension q.
inline double bessel_log_constant(Index q, int d, double alpha) {
  const double k = static_cast<double>(q);
  const double nu = 0.5 * (d - k);
  return (1.0 - k - nu) * std::log(2.0) + (k + nu) * std::log(alpha) - log_gamma(0.5 * d) -
         0.5 * k * std::log(std::numbers::pi);
}

inline double log_evidence(const BlockNorms& b, int d, double alpha, double sigma1) {
  check_rows(b);
  const std::size_t n = b.active_sq.size();
  std::vector<double> terms(n);
  const double nu = 0.5 * (d - static_cast<double>(b.q));
  const double c = b.q > 0 ? bessel_log_constant(b.q, d, alpha) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double t = gaussian_row_term(b.inactive_sq[i], b.p - b.q, sigma1);
    if (b.q > 0) {
      const double r = std::sqrt(b.active_sq[i]);
      t += c + nu * std::log(r) + log_bessel_k(nu, r * alpha);
    }
    terms[i] = t;
  }
  return pairwise_sum(terms);
}

inline double log_evidence_grad(const BlockNorms& b, int d, double alpha) {
  if (b.q == 0) return 0.0;
  check_rows(b);
  const std::size_t n = b.active_sq.size();
  std::vector<double> terms(n);
  const double order = 0.5 * (static_cast<double>(b.q) - d);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::sqrt(b.active_sq[i]);
    terms[i] = d / alpha - r * std::exp(log_bessel_k_ratio(order, r * alpha));
  }
  return pairwise_sum(terms);
}

inline void validate_model(const DataMatrix& x, const EvidenceModel& m) {
  if (m.support.size() != x.p()) throw ArgumentError("evidence: support length differs from p");
  if (!(m.alpha > 0.0) || !std::isfinite(m.alpha))
    throw ArgumentError("evidence: alpha must be positive");
  if (!(m.sigma1 > 0.0) || !std::isfinite(m.sigma1))
    throw ArgumentError("evidence: sigma1 must be positive");
  if (m.latent_dim < 1 || m.latent_dim > std::min(x.n(), x.p()))
    throw ArgumentError("evidence: latent dimension must lie in [1, min(n, p)]");
}

}  // namespace detail

/// Noiseless marginal log-likelihood L(X, v, alpha, sigma1).
inline double noiseless_log_evidence(const DataMatrix& x, const EvidenceModel& model) {
  detail::validate_model(x, model);
  const auto b = detail::block_norms(x.values, model.support);
  return detail::log_evidence(b, model.latent_dim, model.alpha, model.sigma1);
}

/// dL/dalpha = sum_i [ d/alpha - ||x_{i,v}|| K_{(q-d)/2 - 1}(||x_{i,v}|| alpha) / K_{(q-d)/2}(...) ].
inline double evidence_grad_alpha(const DataMatrix& x, const EvidenceModel& model) {
  detail::validate_model(x, model);
  if (model.support.q() < 1) throw ArgumentError("evidence_grad_alpha: support is empty");
  const auto b = detail::block_norms(x.values, model.support);
  return detail::log_evidence_grad(b, model.latent_dim, model.alpha);
}

enum class AlphaMethod { automatic, bisection, golden };

struct AlphaOptions {
  double rel_width = 1e-8;  ///< stop when hi / lo - 1 falls below this
  AlphaMethod method = AlphaMethod::automatic;
  double bracket_lo = 1e-12;  ///< limits of the geometric bracket expansion
  double bracket_hi = 1e12;
  double golden_lo = 1e-6;  ///< log-grid range of the golden-section search
  double golden_hi = 1e6;
  int golden_grid = 61;
};

struct AlphaFit {
  double alpha_hat = std::numeric_limits<double>::quiet_NaN();
  double log_evidence = -std::numeric_limits<double>::infinity();
  AlphaMethod method = AlphaMethod::automatic;  ///< method actually used
  bool boundary = false;  ///< maximizer sits on the search boundary
  int evaluations = 0;
};

namespace detail {

// Bisection on the sign of the (decreasing) gradient, in log alpha.
inline AlphaFit maximize_alpha_bisection(const BlockNorms& b, int d, double sigma1,
                                         const AlphaOptions& opts) {
  AlphaFit fit;
  fit.method = AlphaMethod::bisection;
  auto grad = [&](double a) {
    ++fit.evaluations;
    return log_evidence_grad(b, d, a);
  };
  double lo = 1.0, hi = 1.0;
  const double g0 = grad(1.0);
  if (g0 == 0.0) {
    fit.alpha_hat = 1.0;
  } else if (g0 > 0.0) {
    hi = 10.0;
    while (grad(hi) > 0.0) {
      lo = hi;
      hi *= 10.0;
      if (hi > opts.bracket_hi) {
        fit.boundary = true;
        fit.alpha_hat = opts.bracket_hi;
        break;
      }
    }
  } else {
    lo = 0.1;
    while (grad(lo) < 0.0) {
      hi = lo;
      lo /= 10.0;
      if (lo < opts.bracket_lo) {
        fit.boundary = true;
        fit.alpha_hat = opts.bracket_lo;
        break;
      }
    }
  }
  if (std::isnan(fit.alpha_hat)) {
    while (hi / lo - 1.0 > opts.rel_width) {
      const double mid = std::sqrt(lo * hi);
      if (grad(mid) > 0.0)
        lo = mid;
      else
        hi = mid;
    }
    fit.alpha_hat = std::sqrt(lo * hi);
  }
  fit.log_evidence = log_evidence(b, d, fit.alpha_hat, sigma1);
  ++fit.evaluations;
  return fit;
}

// Coarse log-grid scan followed by golden-section refinement around the best node.
inline AlphaFit maximize_alpha_golden(const BlockNorms& b, int d, double sigma1,
                                      const AlphaOptions& opts) {
  AlphaFit fit;
  fit.method = AlphaMethod::golden;
  auto f = [&](double log_a) {
    ++fit.evaluations;
    return log_evidence(b, d, std::exp(log_a), sigma1);
  };
  const int m = std::max(opts.golden_grid, 3);
  const double l0 = std::log(opts.golden_lo), l1 = std::log(opts.golden_hi);
  const double step = (l1 - l0) / (m - 1);
  int best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < m; ++j) {
    const double v = f(l0 + step * j);
    if (v > best_val) {
      best_val = v;
      best = j;
    }
  }
  fit.boundary = best == 0 || best == m - 1;
  double a = l0 + step * std::max(best - 1, 0);
  double c = l0 + step * std::min(best + 1, m - 1);
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = c - invphi * (c - a), x2 = a + invphi * (c - a);
  double f1 = f(x1), f2 = f(x2);
  const double tol = std::log1p(opts.rel_width);
  while (c - a > tol) {
    if (f1 >= f2) {
      c = x2;
      x2 = x1;
      f2 = f1;
      x1 = c - invphi * (c - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (c - a);
      f2 = f(x2);
    }
  }
  double la = 0.5 * (a + c);
  double val = f(la);
  if (best_val > val) {  // refinement never beats a grid node only on flat plateaus
    la = l0 + step * best;
    val = best_val;
  }
  fit.alpha_hat = std::exp(la);
  fit.log_evidence = val;
  return fit;
}

inline AlphaFit maximize_alpha(const BlockNorms& b, int d, double sigma1,
                               const AlphaOptions& opts) {
  if (b.q < 1) throw ArgumentError("optimize_alpha: support is empty");
  AlphaMethod method = opts.method;
  if (method == AlphaMethod::automatic)
    method = b.q >= d ? AlphaMethod::bisection : AlphaMethod::golden;
  return method == AlphaMethod::bisection ? maximize_alpha_bisection(b, d, sigma1, opts)
                                          : maximize_alpha_golden(b, d, sigma1, opts);
}

}  // namespace detail

/// Maximize L over alpha for a fixed support.
///
/// With q >= d, L is strictly concave in alpha and the root of dL/dalpha is
/// bracketed by factors of 10 from alpha = 1, then bisected. With q < d no
/// concavity guarantee is available and a log-grid plus golden-section search
/// on [1e-6, 1e6] is used instead. Maximizers on the search boundary are
/// returned with `boundary` set.
inline AlphaFit optimize_alpha(const DataMatrix& x, const SupportVector& support, double sigma1,
                               int d, const AlphaOptions& opts = {}) {
  detail::validate_model(x, EvidenceModel{support, 1.0, sigma1, d});
  const auto b = detail::block_norms(x.values, support);
  detail::check_rows(b);
  return detail::maximize_alpha(b, d, sigma1, opts);
}

enum class NoiseEstimator { ml, median, unbiased };

namespace detail {

inline double median_of(std::vector<double> v) {
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  const double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Noise standard deviation of a d-dimensional PPCA fit.
///
/// ml: Tipping-Bishop estimator, (tr(X^T X)/n - sum of the top d eigenvalues) / (p - d).
/// median: median of the per-variable sample variances (no decomposition).
/// unbiased: ml plus the first-order high-dimensional bias correction
///   sigma^2 c (d + sigma^2 sum_i 1/a_i) / (p - d), c = p/n, where a_i are
///   the spike strengths recovered by inverting the spiked-covariance map of
///   the top sample eigenvalues (spikes below the detection edge are skipped).
inline double estimate_noise_sd(const DataMatrix& x, int d, NoiseEstimator method,
                                SvdMethod svd = SvdMethod::exact, std::uint64_t seed = 0) {
  const Index n = x.n(), p = x.p();
  if (method == NoiseEstimator::median) {
    const Vector var = column_variances(x);
    const double med = detail::median_of(std::vector<double>(var.data(), var.data() + var.size()));
    if (!(med > 0.0)) throw DegenerateNoiseError("estimate_noise_sd: median variance is zero");
    return std::sqrt(med);
  }
  if (d < 1 || d >= std::min(n, p))
    throw ArgumentError("estimate_noise_sd: ml/unbiased need 1 <= d < min(n, p)");
  const double total = x.values.squaredNorm() / static_cast<double>(n);
  const auto svdres = truncated_svd(x.values, d, svd, seed);
  const Vector top = svdres.singular_values.array().square() / static_cast<double>(n);
  const double s2 = (total - top.sum()) / static_cast<double>(p - d);
  if (!(s2 > 1e-14 * total / static_cast<double>(p)))
    throw DegenerateNoiseError("estimate_noise_sd: trailing eigenvalues vanish");
  if (method == NoiseEstimator::ml) return std::sqrt(s2);

  const double c = static_cast<double>(p) / static_cast<double>(n);
  double inv_spikes = 0.0;
  for (Index i = 0; i < top.size(); ++i) {
    const double lam = top(i);
    if (lam <= s2 * (1.0 + std::sqrt(c)) * (1.0 + std::sqrt(c))) continue;
    const double b = lam + s2 - c * s2;
    const double disc = b * b - 4.0 * lam * s2;
    if (disc < 0.0) continue;
    const double ell = 0.5 * (b + std::sqrt(disc));
    if (ell > s2) inv_spikes += 1.0 / (ell - s2);
  }
  const double corrected = s2 + s2 * c * (d + s2 * inv_spikes) / static_cast<double>(p - d);
  return std::sqrt(corrected);
}

}  // namespace gsppca

#endif  // GSPPCA_EVIDENCE_HPP
