#ifndef GSPPCA_SPECIAL_HPP
#define GSPPCA_SPECIAL_HPP

// Log-scale special functions behind the exact evidence: ln Gamma, ln K_nu
// (modified Bessel function of the second kind, real order), the ratio
// K_{nu-1}/K_nu, and the symmetric multivariate Bessel density.
//
// K_nu is never formed outside log scale. Regimes for ln K_nu(x), nu >= 0:
//   nu >= 50                  uniform Debye expansion
//   2 nu odd                  closed form (finite sum of positive terms)
//   otherwise                 Temme series (x <= 2) or Steed's continued
//                             fraction (x > 2) at the fractional order
//                             |mu| <= 1/2, then forward recurrence in order.

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <math.h>

#include "gsppca/error.hpp"

namespace gsppca {

/// Parameters of the symmetric multivariate Bessel density on R^dim.
struct BesselParams {
  double beta = 1.0;  ///< scale, > 0
  double nu = 0.0;    ///< order, > -dim/2
  int dim = 1;

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta))
      throw DomainError("BesselParams: beta must be positive and finite");
    if (dim < 1) throw DomainError("BesselParams: dim must be >= 1");
    if (!std::isfinite(nu) || !(nu > -0.5 * dim))
      throw DomainError("BesselParams: nu must exceed -dim/2");
  }
};

namespace detail {

inline constexpr double kEps = 2.220446049250313e-16;
inline constexpr double kDebyeOrder = 50.0;
inline constexpr int kDebyeTerms = 10;
inline constexpr int kMaxIter = 100000;

inline void require_positive_finite(double x, const char* fn) {
  if (!std::isfinite(x) || !(x > 0.0))
    throw DomainError(std::string(fn) + ": argument must be positive and finite, got " +
                      std::to_string(x));
}

inline bool is_half_integer(double nu) {
  const double t = 2.0 * nu;
  return t == std::floor(t) && std::fmod(t, 2.0) == 1.0;
}

// Taylor coefficients of 1/Gamma(z) = sum_{k>=1} c_k z^k.
inline constexpr double kRecipGamma[] = {
    1.0,
    0.57721566490153286061,
    -0.65587807152025388108,
    -0.042002635034095235529,
    0.1665386113822914895,
    -0.042197734555544336748,
    -0.0096219715278769735621,
    0.0072189432466630995424,
    -0.0011651675918590651121,
    -0.00021524167411495097282,
    0.00012805028238811618615,
    -0.000020134854780788238656,
    -1.2504934821426706573e-6,
    1.1330272319816958824e-6,
    -2.0563384169776071035e-7,
    6.1160951044814158179e-9,
    5.0020076444692229301e-9,
    -1.1812745704870201446e-9,
    1.0434267116911005105e-10,
    7.782263439905071254e-12,
    -3.6968056186422057082e-12,
    5.100370287454475979e-13,
    -2.0583260535665067832e-14,
    -5.3481225394230179824e-15,
    1.2267786282382607902e-15,
    -1.1812593016974587695e-16,
    1.1866922547516003326e-18,
    1.4123806553180317816e-18,
};

// gam1 = (1/G(1-mu) - 1/G(1+mu)) / (2 mu), gam2 = (1/G(1-mu) + 1/G(1+mu)) / 2
// for |mu| <= 1/2, without the cancellation of the direct formula.
inline void temme_gammas(double mu, double& gam1, double& gam2) {
  constexpr int n = static_cast<int>(std::size(kRecipGamma));
  double odd = 0.0, even = 0.0;
  for (int k = n; k >= 1; --k) {
    // c_k multiplies mu^{k-1}; odd k land in gam2, even k in -gam1 (shifted)
    if (k % 2 == 1)
      odd = odd * mu * mu + kRecipGamma[k - 1];
    else
      even = even * mu * mu + kRecipGamma[k - 1];
  }
  gam2 = odd;
  gam1 = -even;
}

/// ln K_mu(x) and K_{mu+1}(x)/K_mu(x) for |mu| <= 1/2.
struct BesselSeed {
  double log_k = 0.0;
  double ratio = 0.0;
};

inline BesselSeed bessel_seed(double mu, double x) {
  constexpr double pi = std::numbers::pi;
  BesselSeed out;
  if (x <= 2.0) {
    const double x2 = 0.5 * x;
    const double pimu = pi * mu;
    const double fact = std::abs(pimu) < kEps ? 1.0 : pimu / std::sin(pimu);
    double d = -std::log(x2);
    double e = mu * d;
    const double fact2 = std::abs(e) < kEps ? 1.0 : std::sinh(e) / e;
    double gam1 = 0.0, gam2 = 0.0;
    temme_gammas(mu, gam1, gam2);
    const double gampl = gam2 - mu * gam1;  // 1/Gamma(1+mu)
    const double gammi = gam2 + mu * gam1;  // 1/Gamma(1-mu)
    double ff = fact * (gam1 * std::cosh(e) + gam2 * fact2 * d);
    double sum = ff;
    e = std::exp(e);
    double p = 0.5 * e / gampl;
    double q = 0.5 / (e * gammi);
    double c = 1.0;
    d = x2 * x2;
    double sum1 = p;
    int i = 1;
    for (; i <= kMaxIter; ++i) {
      ff = (i * ff + p + q) / (i * static_cast<double>(i) - mu * mu);
      c *= d / i;
      p /= i - mu;
      q /= i + mu;
      const double del = c * ff;
      sum += del;
      sum1 += c * (p - i * ff);
      if (std::abs(del) < std::abs(sum) * kEps) break;
    }
    if (i > kMaxIter) throw NumericalError("bessel_seed: series failed to converge");
    out.log_k = std::log(sum);
    out.ratio = sum1 * (2.0 / x) / sum;
  } else {
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d, delh = d;
    double q1 = 0.0, q2 = 1.0;
    const double a1 = 0.25 - mu * mu;
    double q = a1, c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    int i = 2;
    for (; i <= kMaxIter; ++i) {
      a -= 2.0 * (i - 1);
      c = -a * c / i;
      const double qnew = (q1 - b * q2) / a;
      q1 = q2;
      q2 = qnew;
      q += c * qnew;
      b += 2.0;
      d = 1.0 / (b + a * d);
      delh = (b * d - 1.0) * delh;
      h += delh;
      const double dels = q * delh;
      s += dels;
      if (std::abs(dels / s) < kEps) break;
    }
    if (i > kMaxIter) throw NumericalError("bessel_seed: continued fraction failed to converge");
    h *= a1;
    out.log_k = 0.5 * std::log(pi / (2.0 * x)) - x - std::log(s);
    out.ratio = (mu + x + 0.5 - h) / x;
  }
  return out;
}

// ln of sum_{k=0}^{n} (n+k)! / (k! (n-k)!) (2x)^{-k}, so that
// K_{n+1/2}(x) = sqrt(pi / (2x)) e^{-x} * exp(half_integer_log_sum(n, x)).
inline double half_integer_log_sum(int n, double x) {
  std::vector<double> logs(static_cast<std::size_t>(n) + 1);
  logs[0] = 0.0;
  const double l2x = std::log(2.0 * x);
  double mx = 0.0;
  for (int k = 0; k < n; ++k) {
    logs[k + 1] = logs[k] + std::log(static_cast<double>(n + k + 1) * (n - k)) -
                  std::log(static_cast<double>(k + 1)) - l2x;
    mx = std::max(mx, logs[k + 1]);
  }
  double acc = 0.0;
  for (double l : logs) acc += std::exp(l - mx);
  return mx + std::log(acc);
}

/// Coefficients (ascending powers of t) of the Debye polynomials u_0..u_K,
/// generated from u_{k+1} = t^2 (1 - t^2) u_k' / 2 + (1/8) int_0^t (1 - 5 s^2) u_k(s) ds.
inline const std::vector<std::vector<double>>& debye_polynomials() {
  static const std::vector<std::vector<double>> table = [] {
    std::vector<std::vector<double>> u(kDebyeTerms + 1);
    u[0] = {1.0};
    for (int k = 0; k < kDebyeTerms; ++k) {
      const auto& uk = u[k];
      std::vector<double> next(uk.size() + 3, 0.0);
      for (std::size_t j = 1; j < uk.size(); ++j) {
        const double dj = j * uk[j];  // coefficient of t^{j-1} in u_k'
        next[j + 1] += 0.5 * dj;
        next[j + 3] -= 0.5 * dj;
      }
      for (std::size_t j = 0; j < uk.size(); ++j) {
        next[j + 1] += 0.125 * uk[j] / (j + 1.0);
        next[j + 3] -= 0.125 * 5.0 * uk[j] / (j + 3.0);
      }
      u[k + 1] = std::move(next);
    }
    return u;
  }();
  return table;
}

// sum_k (-1)^k u_k(t) / nu^k
inline double debye_series(double nu, double t) {
  const auto& u = debye_polynomials();
  double total = 0.0;
  double scale = 1.0;
  for (int k = 0; k <= kDebyeTerms; ++k) {
    const auto& c = u[k];
    double val = 0.0;
    for (std::size_t j = c.size(); j-- > 0;) val = val * t + c[j];
    total += scale * val;
    scale *= -1.0 / nu;
  }
  return total;
}

// Uniform large-order expansion, nu >= kDebyeOrder.
inline double log_bessel_k_debye(double nu, double x) {
  const double s = std::hypot(nu, x);
  const double t = nu / s;
  const double nu_eta = s + nu * std::log(x / (nu + s));
  return 0.5 * std::log(std::numbers::pi / (2.0 * nu)) - nu_eta - 0.5 * std::log(s / nu) +
         std::log(debye_series(nu, t));
}

// ln(K_{nu-1}(x) / K_nu(x)) with both orders in the Debye regime; every
// large term is differenced analytically before rounding.
inline double log_bessel_k_ratio_debye(double nu, double x) {
  const double nu1 = nu - 1.0;
  const double s = std::hypot(nu, x);
  const double s1 = std::hypot(nu1, x);
  const double ds = -(2.0 * nu - 1.0) / (s + s1);  // s1 - s
  // (nu1 * eta(x/nu1)) - (nu * eta(x/nu))
  const double deta = ds + std::log((nu + s) / x) -
                      nu1 * std::log1p((ds - 1.0) / (nu + s));
  return -deta - 0.5 * std::log1p(ds / s) +
         std::log(debye_series(nu1, nu1 / s1) / debye_series(nu, nu / s));
}

inline void validate_bessel_args(double nu, double x, const char* fn) {
  if (!std::isfinite(nu)) throw DomainError(std::string(fn) + ": order must be finite");
  require_positive_finite(x, fn);
}

}  // namespace detail

/// ln Gamma(x) for x > 0.
inline double log_gamma(double x) {
  detail::require_positive_finite(x, "log_gamma");
#if defined(__GLIBC__) || defined(__APPLE__)
  int sign = 0;
  return ::lgamma_r(x, &sign);  // reentrant; std::lgamma writes the global signgam
#else
  return std::lgamma(x);
#endif
}

/// ln K_nu(x), x > 0, any finite real order. Symmetric in nu.
inline double log_bessel_k(double nu, double x) {
  detail::validate_bessel_args(nu, x, "log_bessel_k");
  const double a = std::abs(nu);
  if (a >= detail::kDebyeOrder) return detail::log_bessel_k_debye(a, x);
  if (detail::is_half_integer(a)) {
    const int n = static_cast<int>(a - 0.5);
    return 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x + detail::half_integer_log_sum(n, x);
  }
  const double nl = std::floor(a + 0.5);
  const double mu = a - nl;
  const auto seed = detail::bessel_seed(mu, x);
  double lk = seed.log_k;
  double r = seed.ratio;
  const int steps = static_cast<int>(nl);
  for (int j = 0; j < steps; ++j) {
    lk += std::log(r);
    r = 1.0 / r + 2.0 * (mu + j + 1.0) / x;
  }
  return lk;
}

/// ln(K_{nu-1}(x) / K_nu(x)) computed in a single pass.
inline double log_bessel_k_ratio(double nu, double x) {
  detail::validate_bessel_args(nu, x, "log_bessel_k_ratio");
  if (nu < 0.0) return -log_bessel_k_ratio(1.0 - nu, x);
  if (nu - 1.0 >= detail::kDebyeOrder) return detail::log_bessel_k_ratio_debye(nu, x);
  if (detail::is_half_integer(nu)) {
    const int n = static_cast<int>(nu - 0.5);
    const int m = n >= 1 ? n - 1 : 0;
    return detail::half_integer_log_sum(m, x) - detail::half_integer_log_sum(n, x);
  }
  if (nu >= 1.0) {
    const double nl = std::floor(nu + 0.5);
    const double mu = nu - nl;
    const auto seed = detail::bessel_seed(mu, x);
    double r = seed.ratio;  // K_{mu+j+1} / K_{mu+j}
    const int steps = static_cast<int>(nl) - 1;
    for (int j = 0; j < steps; ++j) r = 1.0 / r + 2.0 * (mu + j + 1.0) / x;
    return -std::log(r);
  }
  // 0 <= nu < 1: ratio K_{1-nu} / K_nu from a single seed pair
  if (nu >= 0.5) {
    const auto seed = detail::bessel_seed(nu - 1.0, x);  // K_{nu-1}, ratio K_nu/K_{nu-1}
    return -std::log(seed.ratio);
  }
  const auto seed = detail::bessel_seed(-nu, x);  // K_{-nu}, ratio K_{1-nu}/K_{-nu}
  return std::log(seed.ratio);
}

/// ln of the symmetric multivariate Bessel density at z.
///
/// At z = 0 the density is finite only for nu > 0; nu <= 0 raises
/// SingularPointError so that callers decide how to treat degenerate points.
inline double log_mv_bessel_pdf(std::span<const double> z, const BesselParams& params) {
  params.validate();
  if (static_cast<int>(z.size()) != params.dim)
    throw ArgumentError("log_mv_bessel_pdf: vector length does not match dim");
  double scale = 0.0;
  for (double v : z) {
    if (!std::isfinite(v)) throw DomainError("log_mv_bessel_pdf: non-finite coordinate");
    scale = std::max(scale, std::abs(v));
  }
  double r = 0.0;
  if (scale > 0.0) {
    double ss = 0.0;
    for (double v : z) ss += (v / scale) * (v / scale);
    r = scale * std::sqrt(ss);
  }
  const double k = params.dim;
  const double nu = params.nu;
  const double lb = std::log(params.beta);
  const double common = -log_gamma(nu + 0.5 * k) - 0.5 * k * std::log(std::numbers::pi);
  if (r == 0.0) {
    if (nu <= 0.0)
      throw SingularPointError("log_mv_bessel_pdf: density diverges at the origin for nu <= 0");
    // r^nu K_nu(r/beta) -> Gamma(nu) 2^{nu-1} beta^nu
    return -k * std::log(2.0) - k * lb + common + log_gamma(nu);
  }
  return (1.0 - k - nu) * std::log(2.0) - (k + nu) * lb + common + nu * std::log(r) +
         log_bessel_k(nu, r / params.beta);
}

}  // namespace gsppca

#endif  // GSPPCA_SPECIAL_HPP
