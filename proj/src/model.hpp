#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace epi {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Scalar parameters moved by the PMMH chain.
struct Theta {
  double sigma = 0.05;   // per-day random-walk scale of the birth rate
  double rho = 0.5;      // reporting probability, in (0, 1]
  std::int64_t x0 = 1;   // prevalence on day 0

  bool valid() const { return sigma > 0.0 && rho > 0.0 && rho <= 1.0 && x0 >= 1; }
};

/// Known removal rate gamma.
struct FixedRates {
  double gamma = 0.1;
};

/// Birth rates beta[0..N-1] for days 1..N and prevalence x[0..N] for days 0..N.
struct LatentPath {
  std::vector<double> beta;
  std::vector<std::int64_t> x;

  std::size_t n_days() const { return beta.size(); }
};

/// Observed prevalence for days 1..N; std::nullopt marks a missing day.
struct ObservedSeries {
  std::vector<std::optional<std::int64_t>> y;

  std::size_t size() const { return y.size(); }
  bool empty() const { return y.empty(); }
  bool all_missing() const;
};

/// Lineage and coalescence counts for one epidemic day.
struct DayGenetics {
  std::int64_t a = 0;
  std::int64_t c = 0;

  friend bool operator==(const DayGenetics&, const DayGenetics&) = default;
};

struct PriorConfig {
  double sigma_rate = 10.0;  // Exp(rate) prior on sigma
  double x0_r = 0.56;        // negative binomial size, real valued
  double x0_p = 0.1;         // negative binomial success probability
};

// Elementary log pmfs / pdfs. All return -inf outside the support.
double poisson_log_pmf(std::int64_t k, double mean);
double binomial_log_pmf(std::int64_t k, std::int64_t n, double p);
/// Failures before the r-th success; r may be any positive real.
double negbin_log_pmf(std::int64_t k, double r, double p);
double exponential_log_pdf(double x, double rate);

/// log P(B - D = k) for independent B ~ Poisson(mu1), D ~ Poisson(mu2).
double skellam_log_pmf(std::int64_t k, double mu1, double mu2);

/// One-day prevalence transition x_prev -> x_next. Deliberately not
/// conditioned on x_next >= 0.
double latent_step_log_pmf(std::int64_t x_prev, std::int64_t x_next, double beta,
                           FixedRates rates);

/// Binomial(x, rho) observation of y reported cases.
double obs_log_pmf(std::int64_t y, std::int64_t x, double rho);

/// Coalescences within one day: c ~ Binomial(C(a,2), 1 - exp(-2 beta / x)).
/// Throws DomainError when c > C(a,2). A day with more lineages than hosts
/// (x < a, a >= 2) has probability zero.
double coal_slice_log_pmf(std::int64_t a, std::int64_t c, double beta, std::int64_t x);

/// Density of |Z| for Z ~ Normal(mu, sigma^2).
double folded_normal_log_pdf(double x, double mu, double sigma);

/// Prior on (sigma, rho, x0) alone.
double log_theta_prior(const Theta& theta, const PriorConfig& prior);

/// Theta prior plus the Exp(rate 1/(2 gamma)) prior on the day-1 birth rate.
double log_priors(const Theta& theta, double beta1, FixedRates rates, const PriorConfig& prior);

/// Rate of the day-1 birth-rate prior; its mean is 2 gamma.
inline double beta1_prior_rate(FixedRates rates) { return 1.0 / (2.0 * rates.gamma); }

/// log n! for n >= 0, tabulated for small n.
double log_factorial(std::int64_t n);

/// log C(n, k) for real n >= k >= 0.
double log_choose(double n, double k);

/// log(exp(a) + exp(b)) without overflow.
double log_add(double a, double b);

}  // namespace epi
