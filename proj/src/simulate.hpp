#pragma once

#include <cstdint>
#include <vector>

#include "model.hpp"
#include "phylo.hpp"
#include "rng.hpp"

namespace epi {

struct BetaSchedule {
  enum class Kind { constant, peaked, changepoint };

  Kind kind = Kind::constant;
  double level = 0.3;                 // constant
  double low = 0.1, high = 0.3;       // peaked: low -> high at mid-epidemic -> low
  std::vector<double> levels;         // changepoint: levels[0] before, levels[1] from change_day
  std::int64_t change_day = 0;

  static BetaSchedule constant(double level);
  static BetaSchedule peaked(double low, double high);
  static BetaSchedule changepoint(double before, double after, std::int64_t day);

  /// Per-day birth rates for days 1..n_days.
  std::vector<double> expand(std::size_t n_days) const;
};

struct ScenarioSpec {
  std::size_t n_days = 40;
  BetaSchedule beta;
  double gamma = 0.1;
  std::int64_t x0 = 5;
  double rho = 0.05;
  /// Probability that a newly infected individual contributes a leaf,
  /// sampled on its infection day.
  double genetic_sampling_fraction = 0.0;
  int max_attempts = 100;

  void validate() const;

  /// Peaked birth rate over 40 days, gamma = 0.1 (R: 1 -> 3 -> 1).
  static ScenarioSpec peaked_reference(double rho, double genetic_fraction);
  /// Constant birth rate 0.3, reporting probability 0.05.
  static ScenarioSpec constant_reference();
};

struct EpidemicRun {
  LatentPath path;
  std::vector<std::int64_t> births;  // births[n-1]: new infections on day n
  bool extinct = false;
};

/// x[n] = x[n-1] + Poisson(beta_n x[n-1]) - Poisson(gamma x[n-1]), clamped at 0.
EpidemicRun simulate_epidemic(const std::vector<double>& beta, FixedRates rates, std::int64_t x0,
                              Rng& rng);

/// y[n] ~ Binomial(x[n], rho) for days 1..N.
ObservedSeries simulate_observations(const LatentPath& path, double rho, Rng& rng);

struct TreeSimulation {
  DatedTree tree;
  std::vector<DayGenetics> records;  // records[n-1] = (a_n, c_n) on epidemic day n
  bool forced_root = false;
  double most_recent_tip_time = 0.0;
};

/// Coalescent tree backwards in time over calendar days (n-1, n]. Leaves of
/// day n sit at time n; leaf_counts[n-1] leaves are added on day n. Throws
/// InfeasibleError if a day samples more leaves than it has infected hosts.
TreeSimulation simulate_tree(const LatentPath& path, const std::vector<double>& beta,
                             const std::vector<std::int64_t>& leaf_counts, Rng& rng);

struct SimOutput {
  ScenarioSpec spec;
  std::vector<double> true_beta;
  EpidemicRun epidemic;
  ObservedSeries observed;
  TreeSimulation tree;
  TreeSlices slices;     // discretize(tree, 1, present = n_days)
  int attempts = 0;
};

/// Epidemic, observations and tree; extinct epidemics are redrawn up to
/// spec.max_attempts times before an InfeasibleError.
SimOutput run_scenario(const ScenarioSpec& spec, std::uint64_t seed);

}  // namespace epi
