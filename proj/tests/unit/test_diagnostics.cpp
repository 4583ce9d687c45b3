#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "diagnostics.hpp"
#include "errors.hpp"
#include "rng.hpp"

using namespace epi;

namespace {

ChainOutput chain_with_paths(std::size_t iterations, std::size_t days) {
  ChainOutput c;
  c.n_days = days;
  for (std::size_t i = 0; i < iterations; ++i) {
    c.sigma.push_back(0.05);
    c.rho.push_back(0.2);
    c.x0.push_back(3);
    c.log_lik.push_back(-10.0);
    c.accepted.push_back(0);
    for (std::size_t d = 0; d < days; ++d) {
      c.beta.push_back(0.25);
      c.x.push_back(40);
    }
  }
  return c;
}

}  // namespace

TEST_CASE("type-7 quantiles") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  CHECK(quantile_sorted(v, 0.025) == doctest::Approx(3.475).epsilon(1e-14));
  CHECK(quantile_sorted(v, 0.975) == doctest::Approx(97.525).epsilon(1e-14));
  CHECK(quantile_sorted(v, 0.0) == 1.0);
  CHECK(quantile_sorted(v, 1.0) == 100.0);
  CHECK(quantile_sorted(v, 0.5) == 50.5);
  CHECK(quantile_sorted({4.0}, 0.3) == 4.0);
  CHECK_THROWS_AS(quantile_sorted({}, 0.5), InvalidArgument);
}

TEST_CASE("summary of a constant chain") {
  const ChainOutput c = chain_with_paths(50, 4);
  const PosteriorSummary s = summarize(c, FixedRates{0.1}, 0.1);
  CHECK(s.burn_in == 5);
  CHECK(s.samples == 45);
  CHECK(s.rho.mean == doctest::Approx(0.2));
  CHECK(s.rho.lo == s.rho.hi);
  REQUIRE(s.beta.size() == 4);
  for (const auto& b : s.beta) {
    CHECK(b.mean == doctest::Approx(0.25));
    CHECK(b.lo == b.hi);
  }
  CHECK(s.x[2].mean == 40.0);
}

TEST_CASE("summary: 1..100 per day, burn-in and R_t") {
  ChainOutput c = chain_with_paths(110, 2);
  for (std::size_t i = 0; i < 110; ++i) {
    const double v = i < 10 ? 1e6 : static_cast<double>(i - 9);
    c.beta[i * 2] = v;
    c.beta[i * 2 + 1] = v / 100.0;
  }
  const PosteriorSummary s = summarize(c, FixedRates{0.25}, 10.0 / 110.0);
  CHECK(s.burn_in == 10);
  CHECK(s.beta[0].lo == doctest::Approx(3.475));
  CHECK(s.beta[0].mean == doctest::Approx(50.5));
  CHECK(s.beta[0].hi == doctest::Approx(97.525));
  for (std::size_t d = 0; d < 2; ++d) {
    CHECK(s.rt[d].mean == s.beta[d].mean / 0.25);
    CHECK(s.rt[d].lo == s.beta[d].lo / 0.25);
    CHECK(s.rt[d].hi == s.beta[d].hi / 0.25);
    CHECK(s.beta[d].lo <= s.beta[d].mean);
    CHECK(s.beta[d].mean <= s.beta[d].hi);
  }
  CHECK_THROWS_AS(summarize(c, FixedRates{0.25}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(summarize(ChainOutput{}, FixedRates{0.25}, 0.1), InvalidArgument);
}

TEST_CASE("summary is invariant to permuting post-burn-in iterations") {
  ChainOutput c = chain_with_paths(200, 3);
  Rng rng(1);
  for (std::size_t i = 0; i < 200; ++i) {
    c.rho[i] = rng.uniform();
    for (std::size_t d = 0; d < 3; ++d) c.beta[i * 3 + d] = rng.uniform();
  }
  ChainOutput p = c;
  std::vector<std::size_t> order(180);
  for (std::size_t i = 0; i < 180; ++i) order[i] = 20 + i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < 180; ++i) {
    p.rho[20 + i] = c.rho[order[i]];
    for (std::size_t d = 0; d < 3; ++d) p.beta[(20 + i) * 3 + d] = c.beta[order[i] * 3 + d];
  }
  const PosteriorSummary a = summarize(c, FixedRates{0.1}, 0.1);
  const PosteriorSummary b = summarize(p, FixedRates{0.1}, 0.1);
  CHECK(a.rho.lo == b.rho.lo);
  CHECK(a.rho.hi == b.rho.hi);
  CHECK(a.rho.mean == doctest::Approx(b.rho.mean).epsilon(1e-14));
  for (std::size_t d = 0; d < 3; ++d) {
    CHECK(a.beta[d].lo == b.beta[d].lo);
    CHECK(a.beta[d].hi == b.beta[d].hi);
  }
}

TEST_CASE("score against the truth") {
  PosteriorSummary s;
  s.beta = {{0.1, 0.05, 0.2}, {0.3, 0.2, 0.35}, {0.2, 0.15, 0.25}};
  const Score perfect = score_vs_truth(s, {0.1, 0.3, 0.2});
  CHECK(perfect.rmse == 0.0);
  CHECK(perfect.coverage == 1.0);
  CHECK(perfect.mean_ci_width == doctest::Approx((0.15 + 0.15 + 0.1) / 3));
  const Score off = score_vs_truth(s, {0.1, 0.4, 0.2});
  CHECK(off.rmse == doctest::Approx(std::sqrt(0.01 / 3)));
  CHECK(off.coverage == doctest::Approx(2.0 / 3));
  CHECK_THROWS_AS(score_vs_truth(s, {0.1}), InvalidArgument);
}

TEST_CASE("chain health") {
  ChainOutput c = chain_with_paths(100, 0);
  for (std::size_t i = 0; i < 100; ++i) c.accepted[i] = i % 2 == 0;
  CHECK(chain_health(c).acceptance_rate == 0.5);

  const ChainOutput stuck = chain_with_paths(100, 0);
  const ChainHealth h = chain_health(stuck);
  CHECK(h.acceptance_rate == 0.0);
  CHECK(h.ess_sigma == 1.0);
  CHECK(h.ess_rho == 1.0);
  CHECK(h.ess_x0 == 1.0);
  CHECK(h.flagged);
  CHECK(h.longest_rejection_run == 100);
}

TEST_CASE("effective sample size") {
  std::normal_distribution<double> z;
  double total = 0.0;
  for (std::uint64_t r = 0; r < 10; ++r) {
    Rng rng = Rng::stream(99, r);
    std::vector<double> v(5000);
    for (double& x : v) x = z(rng);
    const double e = effective_sample_size(v);
    CHECK(e > 0.75 * 5000);
    total += e;
  }
  CHECK(total / 10 > 0.9 * 5000);
  CHECK(total / 10 < 1.1 * 5000);
  // AR(1) with phi = 0.8: n (1 - phi) / (1 + phi).
  Rng rng(5);
  std::vector<double> ar(200000);
  double prev = 0.0;
  for (double& x : ar) {
    x = 0.8 * prev + z(rng);
    prev = x;
  }
  const double expected = 200000.0 * 0.2 / 1.8;
  CHECK(std::fabs(effective_sample_size(ar) - expected) < 0.15 * expected);
}

TEST_CASE("Kolmogorov-Smirnov distance from uniform") {
  CHECK(ks_distance_uniform({0.5}) == doctest::Approx(0.5));
  std::vector<double> grid;
  for (int i = 0; i < 1000; ++i) grid.push_back((i + 0.5) / 1000);
  CHECK(ks_distance_uniform(grid) == doctest::Approx(0.0005));
  CHECK(ks_distance_uniform(std::vector<double>(100, 0.05)) == doctest::Approx(0.95));
}
