#ifndef GSPPCA_VEM_HPP
#define GSPPCA_VEM_HPP

// Variational EM for the relaxed model x_i = U W y_i + eps_i, with
// u in [0,1]^p, w_kj ~ N(0, 1/alpha^2), y_i ~ N(0, I_d), eps_i ~ N(0, sigma^2 I_p).
// The mean-field posterior is q(Y) q(W) with q(y_i) = N(mu_i, Sigma) and
// q(w_k) = N(m_k, S_k).

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gsppca/error.hpp"
#include "gsppca/evidence.hpp"
#include "gsppca/linalg.hpp"
#include "gsppca/parallel.hpp"
#include "gsppca/random.hpp"

namespace gsppca {

struct RelaxedParams {
  Vector u;  ///< length p, entries in [0, 1]
  double alpha = 1.0;
  double sigma = 1.0;
};

struct VariationalState {
  Matrix score_means;                ///< n x d, rows mu_i
  Matrix score_cov;                  ///< d x d, Sigma
  Matrix loading_means;              ///< p x d, rows m_k
  std::vector<Matrix> loading_covs;  ///< p matrices S_k, d x d
};

struct FreeEnergyTrace {
  std::vector<double> values;  ///< -F, starting with the initial state
  bool converged = false;
  int iterations = 0;
};

/// A fit aborted on a numerical failure; carries the trace up to that point.
class VemError : public NumericalError {
public:
  VemError(const std::string& what, FreeEnergyTrace trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const FreeEnergyTrace& trace() const noexcept { return trace_; }

private:
  FreeEnergyTrace trace_;
};

enum class InitStrategy { svd, random };

struct VemConfig {
  int max_iter = 300;
  double rel_tol = 1e-7;
  std::vector<double> alpha_grid{0.1, 1.0, 10.0};
  int grid_iterations = 5;  ///< length of the short runs used to pick alpha_0
  InitStrategy strategy = InitStrategy::svd;
  SvdMethod svd = SvdMethod::exact;
  std::uint64_t seed = 0;
  int threads = 1;
};

namespace detail {

inline constexpr std::uint64_t kInitStream = 0x494e495400000001ULL;

inline void check_shapes(const DataMatrix& x, const RelaxedParams& th, const VariationalState& s) {
  const Index n = x.n(), p = x.p(), d = s.score_cov.rows();
  if (th.u.size() != p || s.score_means.rows() != n || s.score_means.cols() != d ||
      s.score_cov.cols() != d || s.loading_means.rows() != p || s.loading_means.cols() != d ||
      static_cast<Index>(s.loading_covs.size()) != p)
    throw ArgumentError("vem: inconsistent shapes");
  if (!(th.alpha > 0.0) || !(th.sigma > 0.0))
    throw ArgumentError("vem: alpha and sigma must be positive");
}

inline double log_det_spd(const Matrix& a, const char* what) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string("vem: ") + what + " is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

/// Posterior second-moment summaries shared by the free energy and the M-step.
struct Moments {
  Vector a;  ///< Tr[(n Sigma + Mcal^T Mcal)(S_k + m_k m_k^T)]
  Vector b;  ///< sum_i x_ik m_k^T mu_i
  Vector t;  ///< Tr(S_k + m_k m_k^T)
  double tr_xx = 0.0;
  double tr_scores = 0.0;  ///< sum_i Tr(Sigma + mu_i mu_i^T)
  double logdet_sigma = 0.0;
  double logdet_s = 0.0;  ///< sum_k ln|S_k|
};

inline Moments moments(const DataMatrix& x, const VariationalState& s) {
  const Index n = x.n(), p = x.p();
  Moments out;
  const Matrix g = static_cast<double>(n) * s.score_cov + s.score_means.transpose() * s.score_means;
  const Matrix c = s.score_means.transpose() * x.values;  // d x p
  out.a.resize(p);
  out.b.resize(p);
  out.t.resize(p);
  for (Index k = 0; k < p; ++k) {
    const Matrix& sk = s.loading_covs[static_cast<std::size_t>(k)];
    const auto mk = s.loading_means.row(k).transpose();
    out.a(k) = g.cwiseProduct(sk).sum() + mk.dot(g * mk);
    out.b(k) = c.col(k).dot(mk);
    out.t(k) = sk.trace() + mk.squaredNorm();
    out.logdet_s += log_det_spd(sk, "S_k");
  }
  out.tr_xx = x.values.squaredNorm();
  out.tr_scores = static_cast<double>(n) * s.score_cov.trace() + s.score_means.squaredNorm();
  out.logdet_sigma = log_det_spd(s.score_cov, "Sigma");
  return out;
}

inline double free_energy(const Moments& m, const RelaxedParams& th, Index n, Index p, Index d) {
  const double s2 = th.sigma * th.sigma;
  const double np = static_cast<double>(n) * static_cast<double>(p);
  const double quad = (th.u.array().square() * m.a.array()).sum();
  const double cross = (th.u.array() * m.b.array()).sum();
  return -np * std::log(th.sigma) + static_cast<double>(d * p) * std::log(th.alpha) -
         m.tr_xx / (2.0 * s2) - quad / (2.0 * s2) + cross / s2 -
         0.5 * th.alpha * th.alpha * m.t.sum() - 0.5 * m.tr_scores +
         0.5 * static_cast<double>(n) * m.logdet_sigma + 0.5 * m.logdet_s;
}

inline RelaxedParams m_step(const Moments& m, const RelaxedParams& th, Index n, Index p, Index d) {
  RelaxedParams out;
  const double tsum = m.t.sum();
  if (!(tsum > 0.0)) throw DegenerateUpdateError("m_step: loading second moments vanish");
  out.alpha = std::sqrt(static_cast<double>(d * p) / tsum);
  out.u.resize(p);
  for (Index k = 0; k < p; ++k) {
    if (m.a(k) > 0.0)
      out.u(k) = std::clamp(m.b(k) / m.a(k), 0.0, 1.0);
    else if (m.b(k) > 0.0)
      throw DegenerateUpdateError("m_step: A_k = 0 with B_k > 0 at variable " + std::to_string(k));
    else
      out.u(k) = 0.0;
  }
  const double resid = m.tr_xx - 2.0 * (out.u.array() * m.b.array()).sum() +
                       (out.u.array().square() * m.a.array()).sum();
  const double s2 = resid / (static_cast<double>(n) * static_cast<double>(p));
  if (!(s2 > 0.0) || !std::isfinite(s2))
    throw DegenerateUpdateError("m_step: noise variance update is not positive");
  out.sigma = std::sqrt(s2);
  (void)th;
  return out;
}

inline void e_step_inplace(const DataMatrix& x, const RelaxedParams& th, VariationalState& s,
                           int threads) {
  const Index n = x.n(), p = x.p(), d = s.score_cov.rows();
  const double s2 = th.sigma * th.sigma;
  const double a2 = th.alpha * th.alpha;

  // q(Y)
  const Matrix um = th.u.asDiagonal() * s.loading_means;
  Matrix prec = um.transpose() * um;
  for (Index k = 0; k < p; ++k) {
    const double uk2 = th.u(k) * th.u(k);
    if (uk2 != 0.0) prec += uk2 * s.loading_covs[static_cast<std::size_t>(k)];
  }
  prec = Matrix::Identity(d, d) + prec / s2;
  Eigen::LLT<Matrix> llt(prec);
  if (llt.info() != Eigen::Success)
    throw NumericalError("e_step: Sigma^{-1} is not positive definite");
  Matrix sigma = llt.solve(Matrix::Identity(d, d));
  s.score_cov = 0.5 * (sigma + sigma.transpose());
  s.score_means = (x.values * um) * s.score_cov / s2;

  // q(W): S_k^{-1} = alpha^2 I + (u_k^2 / sigma^2) G shares the eigenvectors of G.
  const Matrix g = static_cast<double>(n) * s.score_cov + s.score_means.transpose() * s.score_means;
  Eigen::SelfAdjointEigenSolver<Matrix> es(g);
  if (es.info() != Eigen::Success) throw NumericalError("e_step: eigensolver failed");
  const Matrix& q = es.eigenvectors();
  const Vector lam = es.eigenvalues().cwiseMax(0.0);
  const Matrix c = s.score_means.transpose() * x.values;  // d x p
  parallel_for(p, threads, [&](std::int64_t kk) {
    const Index k = static_cast<Index>(kk);
    const double uk = th.u(k);
    Matrix& sk = s.loading_covs[static_cast<std::size_t>(k)];
    if (uk == 0.0) {
      sk = Matrix::Identity(d, d) / a2;
      s.loading_means.row(k).setZero();
      return;
    }
    const Vector diag = (a2 + (uk * uk / s2) * lam.array()).inverse().matrix();
    sk = q * diag.asDiagonal() * q.transpose();
    sk = 0.5 * (sk + sk.transpose()).eval();
    s.loading_means.row(k) = ((uk / s2) * (sk * c.col(k))).transpose();
  });
}

struct InitFactors {
  Matrix score_means;
  Matrix loading_means;
  double sigma = 1.0;
};

inline InitFactors init_factors(const DataMatrix& x, int d, InitStrategy strategy, SvdMethod svd,
                                std::uint64_t seed) {
  const Index n = x.n(), p = x.p();
  if (d < 1 || d > std::min(n, p)) throw ArgumentError("vem: d must lie in [1, min(n, p)]");
  InitFactors out;
  // The starting sigma only seeds the iterations, so the SVD-free median
  // estimator stands in whenever the ml estimate is undefined.
  const bool use_ml = strategy == InitStrategy::svd && d < std::min(n, p);
  out.sigma = 0.0;
  if (use_ml) {
    try {
      out.sigma = estimate_noise_sd(x, d, NoiseEstimator::ml, svd, seed);
    } catch (const DegenerateNoiseError&) {
    }
  }
  if (out.sigma == 0.0) out.sigma = estimate_noise_sd(x, d, NoiseEstimator::median);
  if (strategy == InitStrategy::svd) {
    const auto f = truncated_svd(x.values, d, svd, seed);
    const double rn = std::sqrt(static_cast<double>(n));
    out.score_means = rn * f.left_vectors;
    out.loading_means = f.right_vectors * f.singular_values.asDiagonal() / rn;
  } else {
    Rng rng(seed, kInitStream);
    out.loading_means.resize(p, d);
    out.score_means.resize(n, d);
    for (Index k = 0; k < p; ++k)
      for (Index j = 0; j < d; ++j) out.loading_means(k, j) = rng.normal();
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < d; ++j) out.score_means(i, j) = rng.normal();
  }
  return out;
}

inline std::pair<RelaxedParams, VariationalState> start_from(const InitFactors& f, double alpha0,
                                                             Index p, Index d) {
  RelaxedParams th;
  th.u = Vector::Ones(p);
  th.alpha = alpha0;
  th.sigma = f.sigma;
  VariationalState s;
  s.score_means = f.score_means;
  s.score_cov = Matrix::Identity(d, d);
  s.loading_means = f.loading_means;
  s.loading_covs.assign(static_cast<std::size_t>(p), Matrix::Identity(d, d) / (alpha0 * alpha0));
  return {std::move(th), std::move(s)};
}

}  // namespace detail

/// Posterior update: q(Y) block first, then q(W) with the new Sigma and Mcal.
inline VariationalState e_step(const DataMatrix& x, const RelaxedParams& params,
                               VariationalState state, int threads = 1) {
  detail::check_shapes(x, params, state);
  detail::e_step_inplace(x, params, state, threads);
  return state;
}

/// Negative free energy -F, up to constants independent of parameters and state.
inline double free_energy(const DataMatrix& x, const RelaxedParams& params,
                          const VariationalState& state) {
  detail::check_shapes(x, params, state);
  return detail::free_energy(detail::moments(x, state), params, x.n(), x.p(),
                             state.score_cov.rows());
}

/// Closed-form maximizers of -F: alpha, then u_k = clip(B_k / A_k, 0, 1), then
/// sigma^2 = [Tr(X^T X) - 2 sum_k u_k B_k + sum_k u_k^2 A_k] / (n p).
inline RelaxedParams m_step(const DataMatrix& x, const RelaxedParams& params,
                            const VariationalState& state) {
  detail::check_shapes(x, params, state);
  return detail::m_step(detail::moments(x, state), params, x.n(), x.p(), state.score_cov.rows());
}

/// Initial parameters and state: u = 1, Sigma = I_d, S_k = alpha0^{-2} I_d,
/// loadings and scores from the truncated SVD or from standard Gaussian draws.
inline std::pair<RelaxedParams, VariationalState> init_state(const DataMatrix& x, int d,
                                                             InitStrategy strategy,
                                                             std::uint64_t seed,
                                                             double alpha0 = 1.0,
                                                             SvdMethod svd = SvdMethod::exact) {
  if (!(alpha0 > 0.0)) throw ArgumentError("init_state: alpha0 must be positive");
  const auto f = detail::init_factors(x, d, strategy, svd, seed);
  return detail::start_from(f, alpha0, x.p(), d);
}

struct VemResult {
  RelaxedParams params;
  VariationalState state;
  FreeEnergyTrace trace;
  double alpha0 = 1.0;  ///< grid value that won the short runs
};

namespace detail {

struct Run {
  RelaxedParams params;
  VariationalState state;
  FreeEnergyTrace trace;
};

// Advances a run until convergence or until it has done `until` iterations.
inline void advance(const DataMatrix& x, Run& run, int until, double rel_tol, int threads) {
  const Index n = x.n(), p = x.p(), d = run.state.score_cov.rows();
  while (!run.trace.converged && run.trace.iterations < until) {
    try {
      e_step_inplace(x, run.params, run.state, threads);
      const Moments m = moments(x, run.state);
      run.params = m_step(m, run.params, n, p, d);
      const double f = free_energy(m, run.params, n, p, d);
      if (!std::isfinite(f)) throw NumericalError("free energy is not finite");
      const double prev = run.trace.values.back();
      run.trace.values.push_back(f);
      ++run.trace.iterations;
      if (std::abs(f - prev) / (1.0 + std::abs(f)) < rel_tol) run.trace.converged = true;
    } catch (const NumericalError& e) {
      throw VemError(std::string(e.what()) + " (VEM iteration " +
                         std::to_string(run.trace.iterations + 1) + ")",
                     run.trace);
    }
  }
}

}  // namespace detail

/// Fits the relaxed model: short runs from each alpha_0 in the grid, then the
/// best start (highest -F) is iterated until the relative change of -F falls
/// below rel_tol or max_iter iterations have been done.
inline VemResult fit_relaxed(const DataMatrix& x, int d, const VemConfig& cfg = {}) {
  if (cfg.alpha_grid.empty()) throw ArgumentError("fit_relaxed: empty alpha grid");
  if (cfg.max_iter < 1) throw ArgumentError("fit_relaxed: max_iter must be positive");
  for (double a : cfg.alpha_grid)
    if (!(a > 0.0) || !std::isfinite(a))
      throw ArgumentError("fit_relaxed: alpha grid values must be positive");
  const auto f = detail::init_factors(x, d, cfg.strategy, cfg.svd, cfg.seed);
  const int short_len = std::min(cfg.grid_iterations, cfg.max_iter);

  detail::Run best;
  double best_alpha0 = 0.0;
  bool have = false;
  std::string last_error;
  for (double a0 : cfg.alpha_grid) {
    auto [th, st] = detail::start_from(f, a0, x.p(), d);
    detail::Run run{std::move(th), std::move(st), {}};
    try {
      run.trace.values.push_back(
          detail::free_energy(detail::moments(x, run.state), run.params, x.n(), x.p(), d));
      detail::advance(x, run, short_len, cfg.rel_tol, cfg.threads);
    } catch (const NumericalError& e) {
      last_error = e.what();
      continue;
    }
    if (!have || run.trace.values.back() > best.trace.values.back()) {
      best = std::move(run);
      best_alpha0 = a0;
      have = true;
    }
  }
  if (!have) throw NumericalError("fit_relaxed: every alpha_0 start failed: " + last_error);
  detail::advance(x, best, cfg.max_iter, cfg.rel_tol, cfg.threads);
  return VemResult{std::move(best.params), std::move(best.state), std::move(best.trace),
                   best_alpha0};
}

}  // namespace gsppca

#endif  // GSPPCA_VEM_HPP
