#include <algorithm>
#include <cmath>
#include <vector>

#include <catch_amalgamated.hpp>

#include "gsppca/random.hpp"
#include "gsppca/simulate.hpp"
#include "gsppca/vem.hpp"
#include "oracles.hpp"

using namespace gsppca;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Matrix gaussian(Index n, Index p, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  Matrix m(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) m(i, j) = sd * rng.normal();
  return m;
}

Matrix random_spd(int d, Rng& rng) {
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  return a * a.transpose() / d + 0.5 * Matrix::Identity(d, d);
}

struct Instance {
  DataMatrix x;
  RelaxedParams th;
  VariationalState st;
};

Instance random_instance(Index n, Index p, int d, std::uint64_t seed) {
  Rng rng(seed);
  Instance in{center(gaussian(n, p, seed + 1000)), {}, {}};
  in.th.u = Vector(p);
  for (Index k = 0; k < p; ++k) in.th.u(k) = rng.uniform();
  in.th.alpha = 0.3 + 2.0 * rng.uniform();
  in.th.sigma = 0.4 + rng.uniform();
  in.st.score_means = gaussian(n, d, seed + 2000);
  in.st.score_cov = random_spd(d, rng);
  in.st.loading_means = gaussian(p, d, seed + 3000);
  for (Index k = 0; k < p; ++k) in.st.loading_covs.push_back(random_spd(d, rng));
  return in;
}

oracle::NaiveState to_naive(const VariationalState& s) {
  return {s.score_means, s.score_cov, s.loading_means, s.loading_covs};
}

double max_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("e_step matches a literal transcription", "[vem]") {
  for (int t = 0; t < 20; ++t) {
    auto in = random_instance(6, 4, 2, 10 + t);
    const auto got = e_step(in.x, in.th, in.st);
    const auto ref = oracle::naive_e_step(in.x.values, in.th.u, in.th.alpha, in.th.sigma, to_naive(in.st));
    CHECK(max_diff(got.score_cov, ref.sigma) < 1e-12);
    CHECK(max_diff(got.score_means, ref.mu) < 1e-12);
    CHECK(max_diff(got.loading_means, ref.m) < 1e-12);
    for (int k = 0; k < 4; ++k) CHECK(max_diff(got.loading_covs[k], ref.s[k]) < 1e-12);
  }
}

TEST_CASE("free energy and M-step match literal transcriptions", "[vem]") {
  for (int t = 0; t < 20; ++t) {
    auto in = random_instance(6, 4, 2, 50 + t);
    const double f = free_energy(in.x, in.th, in.st);
    const auto nv = to_naive(in.st);
    const double fref = oracle::naive_free_energy(in.x.values, in.th.u, in.th.alpha, in.th.sigma, nv);
    CHECK_THAT(f, WithinAbs(fref, 1e-12 * std::max(1.0, std::abs(fref))));
    const auto upd = m_step(in.x, in.th, in.st);
    CHECK_THAT(upd.alpha, WithinAbs(oracle::naive_alpha_update(nv), 1e-12));
    for (int k = 0; k < 4; ++k) CHECK_THAT(upd.u(k), WithinAbs(oracle::naive_u_update(in.x.values, nv, k), 1e-12));
  }
}

TEST_CASE("e_step with zero coupling", "[vem]") {
  auto in = random_instance(8, 5, 3, 1);
  in.th.u.setZero();
  const auto s = e_step(in.x, in.th, in.st);
  CHECK(max_diff(s.score_cov, Matrix::Identity(3, 3)) < 1e-15);
  CHECK(s.score_means.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.loading_means.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& sk : s.loading_covs) CHECK(max_diff(sk, Matrix::Identity(3, 3) / (in.th.alpha * in.th.alpha)) < 1e-15);
}

TEST_CASE("S_k depends on k only through u_k", "[vem]") {
  auto in = random_instance(8, 5, 3, 2);
  in.th.u.setConstant(0.6);
  const auto s = e_step(in.x, in.th, in.st);
  for (int k = 1; k < 5; ++k) CHECK(max_diff(s.loading_covs[k], s.loading_covs[0]) < 1e-14);
}

TEST_CASE("free energy of the trivial configuration is -1", "[vem]") {
  const auto x = as_data(Matrix::Zero(2, 1)).values;  // reuse shape checks below with n = 1
  DataMatrix one;
  one.values = Matrix::Zero(1, 1);
  one.column_means = Vector::Zero(1);
  RelaxedParams th{Vector::Zero(1), 1.0, 1.0};
  VariationalState st{Matrix::Zero(1, 1), Matrix::Identity(1, 1), Matrix::Zero(1, 1), {Matrix::Identity(1, 1)}};
  CHECK_THAT(free_energy(one, th, st), WithinAbs(-1.0, 1e-15));
  (void)x;
}

TEST_CASE("free energy permutation invariance", "[vem]") {
  auto in = random_instance(7, 5, 2, 3);
  const double f = free_energy(in.x, in.th, in.st);
  const std::vector<int> perm{4, 2, 0, 3, 1};
  Instance pm = in;
  for (int j = 0; j < 5; ++j) {
    pm.x.values.col(j) = in.x.values.col(perm[j]);
    pm.th.u(j) = in.th.u(perm[j]);
    pm.st.loading_means.row(j) = in.st.loading_means.row(perm[j]);
    pm.st.loading_covs[j] = in.st.loading_covs[perm[j]];
  }
  CHECK_THAT(free_energy(pm.x, pm.th, pm.st), WithinRel(f, 1e-13));
}

TEST_CASE("duplicated observation matches the transcription", "[vem]") {
  auto in = random_instance(6, 4, 2, 4);
  Matrix x2(7, 4);
  x2 << in.x.values, in.x.values.row(2);
  Matrix mu2(7, 2);
  mu2 << in.st.score_means, in.st.score_means.row(2);
  VariationalState st = in.st;
  st.score_means = mu2;
  DataMatrix dx;
  dx.values = x2;
  dx.column_means = Vector::Zero(4);
  auto nv = to_naive(st);
  CHECK_THAT(free_energy(dx, in.th, st),
             WithinAbs(oracle::naive_free_energy(x2, in.th.u, in.th.alpha, in.th.sigma, nv), 1e-11));
}

TEST_CASE("M-step closed forms", "[vem]") {
  // alpha: d = 2, p = 3, Tr(S_k + m_k m_k^T) = 2 for every k
  {
    DataMatrix x;
    x.values = gaussian(4, 3, 5);
    x.column_means = Vector::Zero(3);
    RelaxedParams th{Vector::Ones(3), 5.0, 1.0};
    VariationalState st{gaussian(4, 2, 6), Matrix::Identity(2, 2), Matrix::Zero(3, 2),
                        std::vector<Matrix>(3, Matrix::Identity(2, 2))};
    CHECK_THAT(m_step(x, th, st).alpha, WithinAbs(1.0, 1e-15));
  }
  // u: A = 2 with (Sigma, mu, S, m) = (1, 1, 0.75, 0.5); B = 0.5 x
  auto u_for = [](double xv) {
    DataMatrix x;
    x.values = Matrix::Constant(1, 1, xv);
    x.column_means = Vector::Zero(1);
    RelaxedParams th{Vector::Ones(1), 1.0, 1.0};
    VariationalState st{Matrix::Ones(1, 1), Matrix::Identity(1, 1), Matrix::Constant(1, 1, 0.5),
                        {Matrix::Constant(1, 1, 0.75)}};
    return m_step(x, th, st).u(0);
  };
  CHECK_THAT(u_for(2.0), WithinAbs(0.5, 1e-15));
  CHECK(u_for(-1.0) == 0.0);
  CHECK(u_for(10.0) == 1.0);
}

TEST_CASE("M-step never decreases the free energy", "[vem]") {
  for (int t = 0; t < 30; ++t) {
    auto in = random_instance(9, 7, 3, 100 + t);
    in.st = e_step(in.x, in.th, in.st);
    const double before = free_energy(in.x, in.th, in.st);
    const auto upd = m_step(in.x, in.th, in.st);
    CHECK(free_energy(in.x, upd, in.st) >= before - 1e-10 * std::abs(before));
  }
}

TEST_CASE("E-step never decreases the free energy", "[vem]") {
  for (int t = 0; t < 30; ++t) {
    auto in = random_instance(9, 7, 3, 200 + t);
    const double before = free_energy(in.x, in.th, in.st);
    const auto s = e_step(in.x, in.th, in.st);
    CHECK(free_energy(in.x, in.th, s) >= before - 1e-10 * std::abs(before));
  }
}

TEST_CASE("fit_relaxed traces are monotone", "[vem]") {
  Rng rng(7);
  for (int t = 0; t < 25; ++t) {
    const Index n = 5 + static_cast<Index>(rng.uniform() * 60), p = 3 + static_cast<Index>(rng.uniform() * 60);
    const int d = 1 + static_cast<int>(rng.uniform() * std::min<Index>(5, std::min(n, p) - 1));
    const auto x = center(gaussian(n, 3, 400 + t) * gaussian(3, p, 500 + t) + gaussian(n, p, 600 + t, 0.7));
    const auto fit = fit_relaxed(x, d, {.max_iter = 150});
    const auto& v = fit.trace.values;
    REQUIRE(v.size() == static_cast<std::size_t>(fit.trace.iterations) + 1);
    for (std::size_t i = 1; i < v.size(); ++i) {
      INFO("instance " << t << " step " << i);
      CHECK(v[i] >= v[i - 1] - 1e-8 * (1.0 + std::abs(v[i - 1])));
    }
  }
}

TEST_CASE("init_state", "[vem]") {
  // rank-d data: SVD-initialized loadings span the principal subspace
  const Matrix x = gaussian(30, 3, 8) * gaussian(3, 12, 9) + gaussian(30, 12, 10, 1e-3);
  const auto dx = center(x);
  const auto [th, st] = init_state(dx, 3, InitStrategy::svd, 0, 2.0);
  CHECK(th.u == Vector::Ones(12));
  CHECK(th.alpha == 2.0);
  CHECK(st.score_cov == Matrix::Identity(3, 3));
  for (const auto& s : st.loading_covs) CHECK(s == Matrix::Identity(3, 3) / 4.0);
  const auto pc = pca(dx, 3);
  const Matrix qm = truncated_svd(st.loading_means, 3).left_vectors;
  const Eigen::JacobiSVD<Matrix> cosines(pc.axes.transpose() * qm);
  CHECK(cosines.singularValues().minCoeff() > 1.0 - 1e-12);

  const auto [t1, s1] = init_state(dx, 3, InitStrategy::random, 42);
  const auto [t2, s2] = init_state(dx, 3, InitStrategy::random, 42);
  CHECK(s1.loading_means == s2.loading_means);
  CHECK(s1.score_means == s2.score_means);
  CHECK(t1.sigma == t2.sigma);
  CHECK_THROWS_AS(init_state(dx, 13, InitStrategy::svd, 0), ArgumentError);
}

TEST_CASE("fit_relaxed is deterministic", "[vem]") {
  const auto x = center(gaussian(25, 15, 11));
  const auto a = fit_relaxed(x, 3, {.strategy = InitStrategy::random, .seed = 9});
  const auto b = fit_relaxed(x, 3, {.strategy = InitStrategy::random, .seed = 9});
  CHECK(a.trace.values == b.trace.values);
  CHECK(a.params.u == b.params.u);
  VemConfig threaded{.strategy = InitStrategy::random, .seed = 9, .threads = 3};
  const auto c = fit_relaxed(x, 3, threaded);
  CHECK(a.trace.values == c.trace.values);
}

TEST_CASE("pure noise shrinks most u toward zero", "[vem]") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto x = center(gaussian(50, 30, 700 + seed));
    const auto fit = fit_relaxed(x, 5);
    std::vector<double> u(fit.params.u.data(), fit.params.u.data() + 30);
    std::nth_element(u.begin(), u.begin() + 15, u.end());
    INFO("seed " << seed);
    CHECK(u[15] < 0.5);
  }
}

TEST_CASE("introductory example: u ranks the true variables first", "[vem]") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto spec = ScenarioSpec::defaults(Scenario::intro);
    spec.seed = seed;
    const auto sim = gen_gsppca_data(spec);
    const auto fit = fit_relaxed(center(sim.x), 5);
    double min_active = 1.0, max_inactive = 0.0;
    for (Index k = 0; k < 30; ++k)
      (k < 10 ? min_active : max_inactive) = k < 10 ? std::min(min_active, fit.params.u(k)) : std::max(max_inactive, fit.params.u(k));
    INFO("seed " << seed);
    CHECK(min_active > max_inactive);
  }
}

TEST_CASE("fit_relaxed argument checks", "[vem]") {
  const auto x = center(gaussian(10, 6, 12));
  CHECK_THROWS_AS(fit_relaxed(x, 0), ArgumentError);
  CHECK_THROWS_AS(fit_relaxed(x, 7), ArgumentError);
  CHECK_THROWS_AS(fit_relaxed(x, 2, {.alpha_grid = {}}), ArgumentError);
  CHECK_THROWS_AS(fit_relaxed(x, 2, {.alpha_grid = {-1.0}}), ArgumentError);
  const auto capped = fit_relaxed(x, 2, {.max_iter = 2, .rel_tol = 0.0});
  CHECK_FALSE(capped.trace.converged);
  CHECK(capped.trace.iterations == 2);
}
