#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "model.hpp"
#include "rng.hpp"

namespace epi {

/// Everything the filter conditions on besides theta.
struct Problem {
  FixedRates rates;
  ObservedSeries observed;            // days 1..N
  std::vector<DayGenetics> genetics;  // days 1..N
  /// Non-empty: birth rates are fixed at these values instead of proposed.
  std::vector<double> fixed_beta;
  /// Non-negative: prevalence above this value has probability zero.
  std::int64_t x_max = -1;

  std::size_t n_days() const { return observed.size(); }
  bool fixed_beta_mode() const { return !fixed_beta.empty(); }

  /// Pads a missing data source to n_days (0 = longest source) and checks
  /// consistency. Throws InvalidArgument.
  static Problem make(FixedRates rates, ObservedSeries observed,
                      std::vector<DayGenetics> genetics, std::size_t n_days = 0);
  void validate() const;
};

/// Particles whose prevalence or one-day birth mean exceeds this are given
/// weight zero instead of being propagated.
inline constexpr double kMaxPrevalence = 1e12;

enum class Resampling { systematic, multinomial };

struct SmcOptions {
  std::size_t particles = 1000;
  double ess_threshold = 0.5;  // resample when ESS < ess_threshold * K
  Resampling resampling = Resampling::systematic;
  /// Worker threads for the particle loop; results do not depend on it.
  std::size_t threads = 1;
};

/// Every particle of every generation, including those culled by resampling.
class ParticleHistory {
 public:
  ParticleHistory() = default;
  ParticleHistory(std::size_t n_days, std::size_t particles, std::int64_t x0);

  std::size_t n_days() const { return n_days_; }
  std::size_t particles() const { return particles_; }
  /// Days actually filled (less than n_days when the filter degenerated).
  std::size_t completed_days() const { return completed_; }

  // Day n in 1..N; day 0 holds x0 for every particle.
  double beta(std::size_t n, std::size_t k) const { return beta_[(n - 1) * particles_ + k]; }
  std::int64_t x(std::size_t n, std::size_t k) const { return x_[n * particles_ + k]; }
  /// Unnormalized weight carried since the last resampling, after day n's update.
  double log_weight(std::size_t n, std::size_t k) const { return logw_[(n - 1) * particles_ + k]; }
  /// Index of the day n-1 particle that particle k of day n extends.
  std::uint32_t ancestor(std::size_t n, std::size_t k) const {
    return ancestors_[(n - 1) * particles_ + k];
  }
  std::span<const double> log_weights(std::size_t n) const {
    return {logw_.data() + (n - 1) * particles_, particles_};
  }
  bool resampled_after(std::size_t n) const { return resampled_[n - 1] != 0; }
  double log_increment(std::size_t n) const { return increments_[n - 1]; }

 private:
  friend class SmcRunner;

  std::size_t n_days_ = 0;
  std::size_t particles_ = 0;
  std::size_t completed_ = 0;
  std::vector<double> beta_;
  std::vector<std::int64_t> x_;
  std::vector<double> logw_;
  std::vector<std::uint32_t> ancestors_;
  std::vector<char> resampled_;
  std::vector<double> increments_;
};

struct SmcEstimate {
  double log_likelihood = 0.0;
  ParticleHistory history;
  bool degenerate = false;
  std::size_t resample_count = 0;
};

/// Particle filter estimate of the marginal likelihood of the data given
/// theta. Never throws for a degenerate run: it returns degenerate = true
/// and log_likelihood = -inf instead.
SmcEstimate run_smc(const Theta& theta, const Problem& problem, const SmcOptions& options,
                    std::uint64_t seed);

/// Probability of drawing the data-driven negative binomial component.
double negbin_mixture_weight(double rho);

/// log P(x_prev + B - D >= 0) under the one-day Skellam transition.
double nonnegative_log_mass(std::int64_t x_prev, double beta, FixedRates rates);

struct PrevalenceDraw {
  std::int64_t x = 0;
  double log_density = 0.0;     // full mixture density at x
  double log_transition = 0.0;  // unconditioned latent_step_log_pmf(x_prev, x)
};

/// Draws tomorrow's prevalence. Missing or zero observations use the
/// Skellam prior restricted to x >= 0; otherwise a mixture of that and
/// y + NegBin(y, rho) failures with weight negbin_mixture_weight(rho).
PrevalenceDraw propose_prevalence(std::int64_t x_prev, double beta, FixedRates rates,
                                  std::optional<std::int64_t> y, double rho, Rng& rng);

/// Density of propose_prevalence at x_next.
double prevalence_proposal_log_density(std::int64_t x_prev, std::int64_t x_next, double beta,
                                       FixedRates rates, std::optional<std::int64_t> y,
                                       double rho);

/// Incremental importance weight: transition + coalescent + observation
/// terms minus the proposal density. The birth-rate prior cancels because
/// birth rates are proposed from it.
double step_log_weight(std::int64_t x_prev, std::int64_t x_next, double beta, FixedRates rates,
                       std::optional<std::int64_t> y, double rho, std::int64_t a, std::int64_t c,
                       double log_proposal_density);

/// U_1 ~ Uniform(0, 1/K), U_i = U_1 + (i-1)/K. Ancestors come out sorted.
/// Throws DegenerateError when every weight is zero.
std::vector<std::uint32_t> systematic_resample(std::span<const double> weights, Rng& rng);
std::vector<std::uint32_t> multinomial_resample(std::span<const double> weights, Rng& rng);

/// 1 / sum W_k^2 of normalized weights.
double ess(std::span<const double> weights);

/// Normalized weights from log weights; all zeros when every entry is -inf.
std::vector<double> normalize_log_weights(std::span<const double> log_weights);

/// Normalized backward-smoothing weights over day-n particles given the
/// chosen day n+1 state.
std::vector<double> smoothing_weights(const ParticleHistory& history, const Theta& theta,
                                      const Problem& problem, std::size_t n, double beta_next,
                                      std::int64_t x_next);

/// Backward simulation of one trajectory. Throws DegenerateError on a
/// degenerate history.
LatentPath backward_simulate(const ParticleHistory& history, const Theta& theta,
                             const Problem& problem, Rng& rng);

/// Naive trajectory: pick a final particle by weight and follow its ancestors.
LatentPath trace_genealogy(const ParticleHistory& history, Rng& rng);

}  // namespace epi
