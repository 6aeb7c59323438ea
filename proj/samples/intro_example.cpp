// Recover the support of a small globally sparse data set.
//
// 50 observations of 30 variables, of which the first 10 carry a
// 5-dimensional signal; noise variance 0.1.

#include <cstdio>
#include <cstdlib>

#include "gsppca/gsppca.hpp"

int main(int argc, char** argv) {
  using namespace gsppca;

  auto spec = ScenarioSpec::defaults(Scenario::intro);
  spec.seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
  const auto sim = gen_gsppca_data(spec);

  const auto res = select_support(center(sim.x), spec.d);

  std::printf("sigma1_hat %.4f  alpha_hat %.4f  q_hat %lld\n", res.sigma1_hat, res.alpha_hat,
              static_cast<long long>(res.q_hat));
  std::printf("  k   log evidence\n");
  for (const auto& pt : res.path)
    std::printf("%3lld   %12.3f%s\n", static_cast<long long>(pt.k), pt.log_evidence, pt.k == res.q_hat ? "  <-" : "");

  std::printf("selected:");
  for (Index j : res.support.active()) std::printf(" %lld", static_cast<long long>(j));
  std::printf("\nF-score against the truth: %.3f\n", f_score(res.support, sim.truth));
  return 0;
}
