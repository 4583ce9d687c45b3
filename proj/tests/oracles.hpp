#pragma once

// Reference implementations used only by the tests. None of them call into
// the library.

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/negative_binomial.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/binomial.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

using real = long double;
using big = boost::multiprecision::cpp_bin_float_50;

inline real poisson_pmf(std::int64_t k, real mu) {
  if (k < 0) return 0;
  if (mu == 0) return k == 0 ? 1 : 0;
  return boost::math::pdf(boost::math::poisson_distribution<real>(mu), static_cast<real>(k));
}

/// P(B - D = k) by summing the convolution of two Poisson pmfs.
inline real skellam_convolution(std::int64_t k, real mu1, real mu2) {
  const auto span = [](real mu) {
    return static_cast<std::int64_t>(mu + 40 * std::sqrt(mu + 1) + 60);
  };
  const std::int64_t hi = std::max(span(mu1), span(mu2)) + std::abs(k);
  real sum = 0;
  for (std::int64_t j = std::max<std::int64_t>(0, -k); j <= hi; ++j) {
    sum += poisson_pmf(j + k, mu1) * poisson_pmf(j, mu2);
  }
  return sum;
}

/// Scaled Bessel route: exp(-(mu1+mu2)) (mu1/mu2)^(k/2) I_|k|(2 sqrt(mu1 mu2)).
inline real skellam_bessel(std::int64_t k, real mu1, real mu2) {
  const real z = 2 * std::sqrt(mu1 * mu2);
  const real nu = static_cast<real>(std::abs(k));
  return std::exp(-(mu1 + mu2) + static_cast<real>(k) / 2 * std::log(mu1 / mu2)) *
         boost::math::cyl_bessel_i(nu, z);
}

inline real binomial_pmf(std::int64_t k, std::int64_t n, real p) {
  if (k < 0 || k > n) return 0;
  if (p == 0) return k == 0 ? 1 : 0;
  if (p == 1) return k == n ? 1 : 0;
  return boost::math::binomial_coefficient<real>(static_cast<unsigned>(n), static_cast<unsigned>(k)) *
         std::pow(p, static_cast<real>(k)) * std::pow(1 - p, static_cast<real>(n - k));
}

/// Failures before the r-th success, r real.
inline real negbin_pmf(std::int64_t k, real r, real p) {
  if (k < 0) return 0;
  return boost::math::pdf(boost::math::negative_binomial_distribution<real>(r, p),
                          static_cast<real>(k));
}

inline real folded_normal_pdf(real x, real mu, real sigma) {
  if (x < 0) return 0;
  const boost::math::normal_distribution<real> n(mu, sigma);
  return boost::math::pdf(n, x) + boost::math::pdf(n, -x);
}

/// Coalescent slice probability in 50-digit arithmetic.
inline big coal_slice_pmf(std::int64_t a, std::int64_t c, double beta, std::int64_t x) {
  const std::int64_t pairs = a * (a - 1) / 2;
  if (a < 2) return c == 0 ? big(1) : big(0);
  if (x < a) return big(0);
  const big p = 1 - boost::multiprecision::exp(-2 * big(beta) / big(x));
  big choose = 1;
  for (std::int64_t i = 0; i < c; ++i) choose = choose * big(pairs - i) / big(i + 1);
  return choose * boost::multiprecision::pow(p, c) * boost::multiprecision::pow(1 - p, pairs - c);
}

/// Latent-step transition without conditioning on staying non-negative.
inline real step_pmf(std::int64_t x_prev, std::int64_t x_next, real beta, real gamma) {
  if (x_prev == 0) return x_next == 0 ? 1 : 0;
  return skellam_convolution(x_next - x_prev, beta * static_cast<real>(x_prev),
                             gamma * static_cast<real>(x_prev));
}

/// A small fixed-birth-rate model with prevalence truncated to {0..x_max}.
struct TinyModel {
  double gamma = 0.1;
  std::vector<double> beta;                     // days 1..N
  std::vector<std::optional<std::int64_t>> y;   // days 1..N
  std::vector<std::pair<std::int64_t, std::int64_t>> genetics;  // (a, c), days 1..N
  double rho = 0.5;
  std::int64_t x0 = 5;
  std::int64_t x_max = 30;
};

/// Exact marginal likelihood by the forward algorithm over the truncated
/// state space.
inline real forward_likelihood(const TinyModel& m) {
  const std::size_t n_days = m.beta.size();
  const std::int64_t states = m.x_max + 1;
  std::vector<real> alpha(static_cast<std::size_t>(states), 0);
  for (std::size_t n = 0; n < n_days; ++n) {
    std::vector<real> next(static_cast<std::size_t>(states), 0);
    for (std::int64_t x = 0; x < states; ++x) {
      real emit = 1;
      if (m.y[n]) emit *= binomial_pmf(*m.y[n], x, m.rho);
      const auto [a, c] = m.genetics[n];
      emit *= static_cast<real>(coal_slice_pmf(a, c, m.beta[n], x));
      if (emit == 0) continue;
      real in = 0;
      if (n == 0) {
        in = step_pmf(m.x0, x, m.beta[0], m.gamma);
      } else {
        for (std::int64_t xp = 0; xp < states; ++xp) {
          if (alpha[static_cast<std::size_t>(xp)] != 0) {
            in += alpha[static_cast<std::size_t>(xp)] * step_pmf(xp, x, m.beta[n], m.gamma);
          }
        }
      }
      next[static_cast<std::size_t>(x)] = in * emit;
    }
    alpha = std::move(next);
  }
  real total = 0;
  for (real v : alpha) total += v;
  return n_days == 0 ? 1 : total;
}

}  // namespace oracle
