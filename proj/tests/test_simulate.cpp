#include <cmath>

#include <catch_amalgamated.hpp>

#include "gsppca/simulate.hpp"

using namespace gsppca;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("scenario defaults and validation", "[simulate]") {
  const auto intro = ScenarioSpec::defaults(Scenario::intro);
  CHECK(intro.n == 50);
  CHECK(intro.p == 30);
  CHECK(intro.d == 5);
  CHECK(intro.q == 10);
  CHECK_THAT(intro.sigma * intro.sigma, WithinRel(0.1, 1e-14));

  const auto snr = ScenarioSpec::defaults(Scenario::snr);
  CHECK(snr.n == 40);
  CHECK(snr.p == 200);
  const auto blocks = ScenarioSpec::defaults(Scenario::blocks);
  CHECK(blocks.n == 66);
  CHECK(blocks.q == 20);

  auto bad = intro;
  bad.q = 31;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad = intro;
  bad.d = 31;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad = blocks;
  bad.p = 202;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad = blocks;
  bad.rho = 1.0;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("snr formula", "[simulate]") {
  CHECK_THAT(snr_value(10, 20, 200, 1.0), WithinRel(1.0, 1e-15));
  CHECK_THAT(snr_value(10, 20, 200, 1.0 / std::sqrt(2.0)), WithinRel(2.0, 1e-14));
  for (double s : {0.1, 0.7, 1.0, 2.3, 3.0})
    CHECK_THAT(snr_value(10, 20, 200, sigma_for_snr(10, 20, 200, s)), WithinRel(s, 1e-12));
  CHECK_THROWS_AS(snr_value(10, 20, 200, 0.0), ArgumentError);

  auto spec = ScenarioSpec::defaults(Scenario::snr);
  spec.snr = 2.5;
  CHECK_THAT(gen_gsppca_data(spec).sigma, WithinRel(std::sqrt(0.4), 1e-14));
}

TEST_CASE("globally sparse data", "[simulate]") {
  auto spec = ScenarioSpec::defaults(Scenario::intro);
  spec.seed = 42;
  const auto a = gen_gsppca_data(spec);
  CHECK(a.x.rows() == 50);
  CHECK(a.x.cols() == 30);
  CHECK(a.truth.q() == 10);
  for (Index j = 0; j < 30; ++j) CHECK(a.truth[j] == (j < 10));
  CHECK(a.loadings.bottomRows(20).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.loadings.topRows(10).cwiseAbs().minCoeff() > 0.0);

  const auto b = gen_gsppca_data(spec);
  CHECK(a.x == b.x);
  spec.seed = 43;
  CHECK(gen_gsppca_data(spec).x != a.x);
}

TEST_CASE("inactive coordinates are white noise", "[simulate]") {
  auto spec = ScenarioSpec::defaults(Scenario::intro);
  spec.n = 4000;
  spec.seed = 7;
  const auto sim = gen_gsppca_data(spec);
  const Matrix xi = sim.x.rightCols(20);
  const Matrix cov = xi.transpose() * xi / static_cast<double>(spec.n);
  const double s2 = 0.1, se_off = s2 / std::sqrt(4000.0), se_diag = s2 * std::sqrt(2.0 / 4000.0);
  for (Index i = 0; i < 20; ++i)
    for (Index j = 0; j < 20; ++j) {
      if (i == j)
        CHECK(std::abs(cov(i, i) - s2) < 4.0 * se_diag);
      else
        CHECK(std::abs(cov(i, j)) < 4.0 * se_off);
    }
}

TEST_CASE("laplace noise has unit variance and heavy tails", "[simulate]") {
  Rng rng(11);
  const Index count = 400000;
  const Matrix e = detail::noise_matrix(rng, count, 1, NoiseKind::laplace, 1.0);
  const double m2 = e.array().square().mean(), m4 = e.array().pow(4).mean();
  // Var(e^2) = E e^4 - 1 = 5 for unit-variance Laplace
  CHECK(std::abs(m2 - 1.0) < 4.0 * std::sqrt(5.0 / count));
  CHECK_THAT(m4, WithinAbs(6.0, 0.3));
  CHECK(std::abs(e.mean()) < 4.0 / std::sqrt(static_cast<double>(count)));
}

TEST_CASE("block latent covariance", "[simulate]") {
  auto spec = ScenarioSpec::defaults(Scenario::blocks);
  spec.n = 20000;
  spec.p = 8;
  spec.d = 2;
  spec.q = 2;
  spec.seed = 3;

  spec.rho = 0.0;
  Matrix z = detail::sample_block_latent(spec);
  Matrix cov = z.transpose() * z / static_cast<double>(spec.n);
  const double se = 0.3 / std::sqrt(20000.0);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j)
      CHECK(std::abs(cov(i, j) - (i == j ? 0.3 : 0.0)) < 4.0 * std::sqrt(i == j ? 2.0 : 1.0) * se);

  spec.rho = 0.2;
  z = detail::sample_block_latent(spec);
  cov = z.transpose() * z / static_cast<double>(spec.n);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j) {
      const bool same = i / 2 == j / 2;
      const double expect = i == j ? 0.3 : (same ? 0.2 : 0.0);
      CHECK(std::abs(cov(i, j) - expect) < 5.0 * std::sqrt(0.09 + expect * expect) / std::sqrt(20000.0));
    }
}

TEST_CASE("block scenario", "[simulate]") {
  auto spec = ScenarioSpec::defaults(Scenario::blocks);
  spec.seed = 5;
  const auto sim = gen_block_data(spec);
  CHECK(sim.x.rows() == 66);
  CHECK(sim.x.cols() == 200);
  CHECK(sim.truth.q() == 20);
  for (Index j = 0; j < 200; ++j) CHECK(sim.truth[j] == (j < 20));
  CHECK(sim.loadings.bottomRows(180).cwiseAbs().maxCoeff() == 0.0);
  CHECK(sim.loadings.topRows(20).rowwise().norm().minCoeff() > 0.0);
  CHECK(gen_block_data(spec).x == sim.x);
  CHECK(simulate(spec).x == sim.x);

  spec.noise = NoiseKind::laplace;
  CHECK(gen_block_data(spec).x != sim.x);

  // diagonal 0.3 with 50 variables per block: PSD iff -0.3/49 <= rho <= 0.3
  spec.rho = 0.31;
  CHECK_THROWS_AS(gen_block_data(spec), ArgumentError);
  spec.rho = -0.01;
  CHECK_THROWS_AS(gen_block_data(spec), ArgumentError);
  spec.rho = 0.3;
  CHECK_NOTHROW(gen_block_data(spec));
  CHECK_THROWS_AS(gen_gsppca_data(spec), ArgumentError);
}

TEST_CASE("matrix-vector product sampler", "[simulate]") {
  const Index count = 200000;
  const double s = 0.7;
  const int d = 3;
  const Matrix draws = sample_gaussian_matrix_vector(2, d, s, count, 9);
  const double var = s * s * d;
  for (Index j = 0; j < 2; ++j) {
    CHECK(std::abs(draws.col(j).mean()) < 4.0 * std::sqrt(var / count));
    CHECK_THAT(draws.col(j).array().square().mean(), WithinRel(var, 0.02));
  }

  // characteristic function (1 + s^2 |t|^2)^(-d/2)
  for (double t : {0.3, 0.8, 1.5}) {
    double re = 0.0;
    for (Index i = 0; i < count; ++i) re += std::cos(t * draws(i, 0) + 0.5 * t * draws(i, 1));
    re /= static_cast<double>(count);
    const double r2 = t * t * 1.25;
    const double expect = std::pow(1.0 + s * s * r2, -0.5 * d);
    CHECK(std::abs(re - expect) < 4.0 / std::sqrt(2.0 * count));
  }
  CHECK_THROWS_AS(sample_gaussian_matrix_vector(0, 1, 1.0, 10, 1), ArgumentError);
}
