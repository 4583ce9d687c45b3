#include "tune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "errors.hpp"

namespace epi {

void TuneSpec::validate() const {
  if (floor > cap) throw InvalidArgument("particle floor exceeds the cap");
  if (replicates < 2) throw InvalidArgument("need at least two probe replicates");
  if (repeats < 1) throw InvalidArgument("need at least one repeat");
  if (pilot_iterations < 1 || k_large < 1 || k_s < 1) {
    throw InvalidArgument("pilot iterations and particle counts must be positive");
  }
}

double particles_for_variance(double variance, std::size_t k_s) {
  return static_cast<double>(k_s) * variance / (kTargetLogLikSd * kTargetLogLikSd);
}

std::size_t clamp_particles(double raw, std::size_t floor, std::size_t cap) {
  if (std::isnan(raw)) throw InvalidArgument("particle count is NaN");
  if (raw >= static_cast<double>(cap)) return cap;
  const double rounded = std::round(raw);
  if (rounded <= static_cast<double>(floor)) return floor;
  return static_cast<std::size_t>(rounded);
}

double sample_variance(const std::vector<double>& values) {
  if (values.size() < 2) throw InvalidArgument("variance needs at least two values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / (n - 1.0);
}

TuneReport choose_particles_from_variances(const TuneSpec& spec,
                                           const std::vector<std::optional<double>>& variances) {
  TuneReport report;
  bool any = false;
  for (std::size_t r = 0; r < variances.size(); ++r) {
    TuneRepeat rep;
    rep.variance = variances[r];
    if (!rep.variance) {
      rep.discarded = true;
      report.warnings.push_back("repeat " + std::to_string(r + 1) +
                                ": every probe run was degenerate; discarded");
    } else {
      rep.k_raw = particles_for_variance(*rep.variance, spec.k_s);
      report.k_raw_max = any ? std::max(report.k_raw_max, rep.k_raw) : rep.k_raw;
      any = true;
    }
    report.repeats.push_back(rep);
  }
  if (!any) throw TuningFailed("every tuning repeat was discarded");
  report.k_opt = clamp_particles(report.k_raw_max, spec.floor, spec.cap);
  return report;
}

TuneReport choose_particles(const TuneSpec& spec, const Problem& problem,
                            const ChainConfig& chain, const SmcOptions& smc_options,
                            const PriorConfig& prior) {
  spec.validate();
  std::vector<std::optional<double>> variances;
  std::vector<TuneRepeat> details;
  for (std::size_t r = 0; r < spec.repeats; ++r) {
    ChainConfig pilot = chain;
    pilot.iterations = spec.pilot_iterations;
    pilot.store_paths = false;
    pilot.seed = mix_key(spec.seed, r, 1);
    SmcOptions large = smc_options;
    large.particles = spec.k_large;
    TuneRepeat rep;
    try {
      const ChainOutput out = run_pmmh(pilot, problem, large, prior);
      const double n = static_cast<double>(out.size());
      rep.theta_bar.sigma = std::accumulate(out.sigma.begin(), out.sigma.end(), 0.0) / n;
      rep.theta_bar.rho = std::accumulate(out.rho.begin(), out.rho.end(), 0.0) / n;
      const double x0_mean =
          std::accumulate(out.x0.begin(), out.x0.end(), 0.0,
                          [](double s, std::int64_t v) { return s + static_cast<double>(v); }) /
          n;
      rep.theta_bar.x0 = std::max<std::int64_t>(1, std::llround(x0_mean));
    } catch (const DegenerateError&) {
      variances.emplace_back();
      details.push_back(rep);
      continue;
    }

    SmcOptions probe = smc_options;
    probe.particles = spec.k_s;
    std::vector<double> lls;
    for (std::size_t j = 0; j < spec.replicates; ++j) {
      const SmcEstimate est = run_smc(rep.theta_bar, problem, probe, mix_key(spec.seed, r, 2 + j));
      if (est.degenerate) {
        ++rep.degenerate_replicates;
      } else {
        lls.push_back(est.log_likelihood);
      }
    }
    if (lls.size() < 2) {
      variances.emplace_back();
    } else if (rep.degenerate_replicates > 0) {
      // A -inf replicate makes the estimator variance unbounded.
      variances.emplace_back(std::numeric_limits<double>::infinity());
    } else {
      variances.emplace_back(sample_variance(lls));
    }
    details.push_back(rep);
  }
  TuneReport report = choose_particles_from_variances(spec, variances);
  for (std::size_t r = 0; r < details.size(); ++r) {
    report.repeats[r].theta_bar = details[r].theta_bar;
    report.repeats[r].degenerate_replicates = details[r].degenerate_replicates;
    if (details[r].degenerate_replicates > 0 && report.repeats[r].variance) {
      report.warnings.push_back("repeat " + std::to_string(r + 1) + ": " +
                                std::to_string(details[r].degenerate_replicates) +
                                " degenerate probe runs; variance treated as unbounded");
    }
  }
  return report;
}

}  // namespace epi
