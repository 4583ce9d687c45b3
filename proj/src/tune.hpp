#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pmmh.hpp"

namespace epi {

struct TuneSpec {
  std::size_t pilot_iterations = 500;
  std::size_t k_large = 5000;
  std::size_t k_s = 500;
  std::size_t replicates = 100;  // R
  std::size_t floor = 1000;
  std::size_t cap = 25000;
  std::size_t repeats = 3;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Target variance of the log-likelihood estimator.
inline constexpr double kTargetLogLikSd = 0.92;

/// K_s * variance / 0.92^2.
double particles_for_variance(double variance, std::size_t k_s);

/// Rounds to the nearest integer and clamps to [floor, cap]; +inf gives cap.
std::size_t clamp_particles(double raw, std::size_t floor, std::size_t cap);

/// Two-pass sample variance (divisor R - 1).
double sample_variance(const std::vector<double>& values);

struct TuneRepeat {
  Theta theta_bar;
  std::optional<double> variance;  // empty: every replicate was degenerate
  double k_raw = 0.0;
  std::size_t degenerate_replicates = 0;
  bool discarded = false;
};

struct TuneReport {
  std::vector<TuneRepeat> repeats;
  double k_raw_max = 0.0;
  std::size_t k_opt = 0;
  std::vector<std::string> warnings;
};

/// The arithmetic half of the procedure: given per-repeat variances (empty =
/// discarded repeat) returns the report. Throws TuningFailed when every
/// repeat was discarded.
TuneReport choose_particles_from_variances(const TuneSpec& spec,
                                           const std::vector<std::optional<double>>& variances);

/// Full procedure: pilot chain at K_large for theta_bar, R filter runs at
/// (theta_bar, K_s), K_s * variance / 0.92^2, maximum over repeats, clamp.
/// `chain` supplies the starting point and adaptation settings of the pilot.
TuneReport choose_particles(const TuneSpec& spec, const Problem& problem,
                            const ChainConfig& chain, const SmcOptions& smc_options,
                            const PriorConfig& prior);

}  // namespace epi
