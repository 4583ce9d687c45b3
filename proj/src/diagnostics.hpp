#pragma once

#include <cstdint>
#include <vector>

#include "model.hpp"
#include "pmmh.hpp"

namespace epi {

/// Type-7 (linear interpolation) quantile of sorted data, p in [0, 1].
double quantile_sorted(const std::vector<double>& sorted, double p);

struct IntervalSummary {
  double mean = 0.0;
  double lo = 0.0;  // 2.5%
  double hi = 0.0;  // 97.5%
};

/// Mean and central 95% interval of unsorted samples.
IntervalSummary summarize_samples(std::vector<double> samples);

struct PosteriorSummary {
  std::size_t burn_in = 0;
  std::size_t samples = 0;
  double acceptance_rate = 0.0;
  IntervalSummary sigma, rho, x0;
  std::vector<IntervalSummary> beta;  // per day 1..N
  std::vector<IntervalSummary> rt;    // beta / gamma
  std::vector<IntervalSummary> x;     // per day 1..N
};

/// Discards the first floor(burn_in_fraction * I) iterations.
PosteriorSummary summarize(const ChainOutput& chain, FixedRates rates, double burn_in_fraction);

struct Score {
  double rmse = 0.0;
  double mean_ci_width = 0.0;
  double coverage = 0.0;
};

/// Scores the birth-rate summary against the true per-day birth rates.
Score score_vs_truth(const PosteriorSummary& summary, const std::vector<double>& true_beta);

/// Effective sample size by Geyer's initial monotone sequence. A constant
/// chain gives 1.
double effective_sample_size(const std::vector<double>& chain);

struct ChainHealth {
  double acceptance_rate = 0.0;
  double ess_sigma = 0.0, ess_rho = 0.0, ess_x0 = 0.0;
  std::size_t longest_rejection_run = 0;
  bool flagged = false;  // some parameter never moved
};

ChainHealth chain_health(const ChainOutput& chain);

/// sup |F_n(t) - t| against Uniform(0, 1).
double ks_distance_uniform(std::vector<double> samples);

}  // namespace epi
