#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "bessel.hpp"
#include "errors.hpp"

namespace epi {

bool ObservedSeries::all_missing() const {
  return std::none_of(y.begin(), y.end(), [](const auto& v) { return v.has_value(); });
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double log_factorial(std::int64_t n) {
  constexpr std::int64_t kTable = 4096;
  static const std::vector<double> table = [] {
    std::vector<double> t(kTable);
    for (std::int64_t i = 0; i < kTable; ++i) t[i] = std::lgamma(static_cast<double>(i) + 1.0);
    return t;
  }();
  if (n < kTable) return table[static_cast<std::size_t>(n)];
  return std::lgamma(static_cast<double>(n) + 1.0);
}

double log_choose(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double poisson_log_pmf(std::int64_t k, double mean) {
  if (k < 0) return kNegInf;
  if (mean == 0.0) return k == 0 ? 0.0 : kNegInf;
  const double kd = static_cast<double>(k);
  return kd * std::log(mean) - mean - log_factorial(k);
}

double binomial_log_pmf(std::int64_t k, std::int64_t n, double p) {
  if (k < 0 || n < 0 || k > n) return kNegInf;
  const double kd = static_cast<double>(k);
  const double fd = static_cast<double>(n - k);
  // 0 * log(0) terms vanish: p == 0 or p == 1 are point masses.
  const double hit = k == 0 ? 0.0 : kd * std::log(p);
  const double miss = n == k ? 0.0 : fd * std::log1p(-p);
  return log_factorial(n) - log_factorial(k) - log_factorial(n - k) + hit + miss;
}

double negbin_log_pmf(std::int64_t k, double r, double p) {
  if (k < 0 || !(r > 0.0) || !(p > 0.0) || p > 1.0) return kNegInf;
  const double kd = static_cast<double>(k);
  const double miss = k == 0 ? 0.0 : kd * std::log1p(-p);
  return std::lgamma(kd + r) - std::lgamma(kd + 1.0) - std::lgamma(r) + r * std::log(p) + miss;
}

double exponential_log_pdf(double x, double rate) {
  if (x < 0.0 || !(rate > 0.0)) return kNegInf;
  return std::log(rate) - rate * x;
}

double skellam_log_pmf(std::int64_t k, double mu1, double mu2) {
  if (mu1 == 0.0 && mu2 == 0.0) return k == 0 ? 0.0 : kNegInf;
  if (mu2 == 0.0) return poisson_log_pmf(k, mu1);
  if (mu1 == 0.0) return poisson_log_pmf(-k, mu2);
  // exp(-(mu1 + mu2)) (mu1/mu2)^{k/2} I_|k|(2 sqrt(mu1 mu2)), with the
  // exponential folded into the scaled Bessel function.
  const double r1 = std::sqrt(mu1);
  const double r2 = std::sqrt(mu2);
  const double gap = r1 - r2;
  const double arg = 2.0 * std::sqrt(mu1 * mu2);
  // Larger rate over smaller.
  const bool swap = mu1 < mu2;
  const double big = swap ? mu2 : mu1;
  const double small = swap ? mu1 : mu2;
  const double ratio = big / small;
  double log_ratio = std::isfinite(ratio) ? std::log(ratio) : std::log(big) - std::log(small);
  if (swap) log_ratio = -log_ratio;
  return -gap * gap + 0.5 * static_cast<double>(k) * log_ratio +
         log_bessel_i_scaled(k, arg);
}

double latent_step_log_pmf(std::int64_t x_prev, std::int64_t x_next, double beta,
                           FixedRates rates) {
  const double xp = static_cast<double>(x_prev);
  return skellam_log_pmf(x_next - x_prev, beta * xp, rates.gamma * xp);
}

double obs_log_pmf(std::int64_t y, std::int64_t x, double rho) {
  return binomial_log_pmf(y, x, rho);
}

double coal_slice_log_pmf(std::int64_t a, std::int64_t c, double beta, std::int64_t x) {
  const std::int64_t pairs = a < 2 ? 0 : a * (a - 1) / 2;
  if (c < 0 || c > pairs) {
    throw DomainError("coalescence count " + std::to_string(c) + " exceeds " +
                      std::to_string(pairs) + " lineage pairs");
  }
  if (a < 2) return 0.0;
  if (x <= 0 || x < a) return kNegInf;
  const double hazard = 2.0 * beta / static_cast<double>(x);
  const double cd = static_cast<double>(c);
  const double pd = static_cast<double>(pairs);
  const double hit = c == 0 ? 0.0 : cd * std::log(-std::expm1(-hazard));
  return log_choose(pd, cd) + hit - (pd - cd) * hazard;
}

double folded_normal_log_pdf(double x, double mu, double sigma) {
  if (x < 0.0 || !(sigma > 0.0)) return kNegInf;
  const double a = (x - mu) / sigma;
  const double b = (x + mu) / sigma;
  const double log_norm = -std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
  return log_norm + log_add(-0.5 * a * a, -0.5 * b * b);
}

double log_theta_prior(const Theta& theta, const PriorConfig& prior) {
  if (!theta.valid()) return kNegInf;
  return exponential_log_pdf(theta.sigma, prior.sigma_rate) +
         negbin_log_pmf(theta.x0, prior.x0_r, prior.x0_p);
}

double log_priors(const Theta& theta, double beta1, FixedRates rates, const PriorConfig& prior) {
  if (!(rates.gamma > 0.0)) return kNegInf;
  return log_theta_prior(theta, prior) + exponential_log_pdf(beta1, beta1_prior_rate(rates));
}

}  // namespace epi
