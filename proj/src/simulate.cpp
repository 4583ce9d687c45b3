#include "simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "errors.hpp"

namespace epi {
namespace {

std::int64_t draw_poisson(double mean, Rng& rng) {
  if (!(mean > 0.0)) return 0;
  return std::poisson_distribution<std::int64_t>(mean)(rng);
}

std::int64_t draw_binomial(std::int64_t n, double p, Rng& rng) {
  if (n <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  return std::binomial_distribution<std::int64_t>(n, p)(rng);
}

// Uniform time strictly inside (lo, hi), away from both ends.
double interior_time(double lo, double hi, Rng& rng) {
  constexpr double margin = 1e-6;
  return lo + margin + (hi - lo - 2.0 * margin) * rng.uniform_open();
}

}  // namespace

BetaSchedule BetaSchedule::constant(double level) {
  BetaSchedule s;
  s.kind = Kind::constant;
  s.level = level;
  return s;
}

BetaSchedule BetaSchedule::peaked(double low, double high) {
  BetaSchedule s;
  s.kind = Kind::peaked;
  s.low = low;
  s.high = high;
  return s;
}

BetaSchedule BetaSchedule::changepoint(double before, double after, std::int64_t day) {
  BetaSchedule s;
  s.kind = Kind::changepoint;
  s.levels = {before, after};
  s.change_day = day;
  return s;
}

std::vector<double> BetaSchedule::expand(std::size_t n_days) const {
  std::vector<double> beta(n_days);
  const double half = 0.5 * static_cast<double>(n_days);
  for (std::size_t i = 0; i < n_days; ++i) {
    const double day = static_cast<double>(i + 1);
    switch (kind) {
      case Kind::constant:
        beta[i] = level;
        break;
      case Kind::peaked:
        beta[i] = low + (high - low) * (1.0 - std::fabs(day - half) / half);
        break;
      case Kind::changepoint:
        if (levels.size() != 2) throw InvalidArgument("changepoint schedule needs two levels");
        beta[i] = static_cast<std::int64_t>(i + 1) < change_day ? levels[0] : levels[1];
        break;
    }
  }
  return beta;
}

void ScenarioSpec::validate() const {
  if (n_days < 1) throw InvalidArgument("scenario needs at least one day");
  if (!(gamma > 0.0)) throw InvalidArgument("gamma must be positive");
  if (x0 < 1) throw InvalidArgument("x0 must be at least 1");
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidArgument("rho must lie in [0, 1]");
  if (!(genetic_sampling_fraction >= 0.0 && genetic_sampling_fraction <= 1.0)) {
    throw InvalidArgument("genetic sampling fraction must lie in [0, 1]");
  }
  if (max_attempts < 1) throw InvalidArgument("max_attempts must be positive");
  for (double b : beta.expand(n_days)) {
    if (!(b > 0.0)) throw InvalidArgument("birth rates must be positive");
  }
}

ScenarioSpec ScenarioSpec::peaked_reference(double rho, double genetic_fraction) {
  ScenarioSpec s;
  s.n_days = 40;
  s.beta = BetaSchedule::peaked(0.1, 0.3);
  s.gamma = 0.1;
  s.x0 = 5;
  s.rho = rho;
  s.genetic_sampling_fraction = genetic_fraction;
  return s;
}

ScenarioSpec ScenarioSpec::constant_reference() {
  ScenarioSpec s;
  s.n_days = 40;
  s.beta = BetaSchedule::constant(0.3);
  s.gamma = 0.1;
  s.x0 = 5;
  s.rho = 0.05;
  return s;
}

EpidemicRun simulate_epidemic(const std::vector<double>& beta, FixedRates rates, std::int64_t x0,
                              Rng& rng) {
  EpidemicRun run;
  run.path.beta = beta;
  run.path.x.assign(beta.size() + 1, 0);
  run.births.assign(beta.size(), 0);
  run.path.x[0] = std::max<std::int64_t>(x0, 0);
  run.extinct = run.path.x[0] == 0;
  for (std::size_t n = 1; n <= beta.size(); ++n) {
    const std::int64_t prev = run.path.x[n - 1];
    if (prev == 0) {
      run.extinct = true;
      continue;
    }
    const double xp = static_cast<double>(prev);
    const std::int64_t births = draw_poisson(beta[n - 1] * xp, rng);
    const std::int64_t deaths = draw_poisson(rates.gamma * xp, rng);
    run.births[n - 1] = births;
    run.path.x[n] = std::max<std::int64_t>(prev + births - deaths, 0);
    if (run.path.x[n] == 0) run.extinct = true;
  }
  return run;
}

ObservedSeries simulate_observations(const LatentPath& path, double rho, Rng& rng) {
  ObservedSeries out;
  out.y.resize(path.n_days());
  for (std::size_t n = 1; n <= path.n_days(); ++n) {
    out.y[n - 1] = draw_binomial(path.x[n], rho, rng);
  }
  return out;
}

TreeSimulation simulate_tree(const LatentPath& path, const std::vector<double>& beta,
                             const std::vector<std::int64_t>& leaf_counts, Rng& rng) {
  const std::size_t n_days = beta.size();
  if (leaf_counts.size() != n_days || path.x.size() != n_days + 1) {
    throw InvalidArgument("leaf schedule, path and birth rates disagree on length");
  }
  std::int64_t pending = 0;
  for (std::size_t n = 1; n <= n_days; ++n) {
    if (leaf_counts[n - 1] < 0 || leaf_counts[n - 1] > path.x[n]) {
      throw InfeasibleError("day " + std::to_string(n) + " samples " +
                            std::to_string(leaf_counts[n - 1]) + " leaves from " +
                            std::to_string(path.x[n]) + " infected");
    }
    pending += leaf_counts[n - 1];
  }

  TreeSimulation out;
  out.records.assign(n_days, DayGenetics{});
  std::vector<DatedTree::Node> nodes;
  std::vector<int> lineages;

  auto merge = [&](double t) {
    const auto m = lineages.size();
    const auto i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(m));
    auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(m - 1));
    if (j >= i) ++j;
    DatedTree::Node parent;
    parent.time = t;
    parent.left = lineages[i];
    parent.right = lineages[j];
    const int id = static_cast<int>(nodes.size());
    nodes[parent.left].parent = id;
    nodes[parent.right].parent = id;
    nodes.push_back(parent);
    lineages[std::min(i, j)] = id;
    lineages.erase(lineages.begin() + static_cast<std::ptrdiff_t>(std::max(i, j)));
  };

  auto merge_within = [&](std::int64_t count, double lo, double hi) {
    std::vector<double> times(static_cast<std::size_t>(count));
    for (auto& t : times) t = interior_time(lo, hi, rng);
    std::sort(times.begin(), times.end(), std::greater<>());
    for (double t : times) merge(t);
  };

  for (std::size_t n = n_days; n >= 1; --n) {
    const double day_end = static_cast<double>(n);
    for (std::int64_t l = 0; l < leaf_counts[n - 1]; ++l) {
      DatedTree::Node leaf;
      leaf.time = day_end;
      leaf.label = "L" + std::to_string(nodes.size()) + "_d" + std::to_string(n);
      lineages.push_back(static_cast<int>(nodes.size()));
      nodes.push_back(std::move(leaf));
      out.most_recent_tip_time = std::max(out.most_recent_tip_time, day_end);
    }
    pending -= leaf_counts[n - 1];
    const auto a = static_cast<std::int64_t>(lineages.size());
    if (a == 1 && pending == 0 && leaf_counts[n - 1] == 0) continue;  // past the root
    std::int64_t c = 0;
    if (a >= 2) {
      const std::int64_t x = path.x[n];
      const double p = x > 0 ? -std::expm1(-2.0 * beta[n - 1] / static_cast<double>(x)) : 1.0;
      c = std::min(draw_binomial(a * (a - 1) / 2, p, rng), a - 1);
      merge_within(c, day_end - 1.0, day_end);
    }
    out.records[n - 1] = DayGenetics{a, c};
  }
  if (lineages.size() > 1) {
    out.forced_root = true;
    merge_within(static_cast<std::int64_t>(lineages.size()) - 1, -1.0, 0.0);
  }
  out.tree = DatedTree(std::move(nodes));
  return out;
}

SimOutput run_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  SimOutput out;
  out.spec = spec;
  out.true_beta = spec.beta.expand(spec.n_days);
  const FixedRates rates{spec.gamma};
  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(attempt));
    out.epidemic = simulate_epidemic(out.true_beta, rates, spec.x0, rng);
    out.attempts = attempt + 1;
    if (out.epidemic.extinct) continue;
    out.observed = simulate_observations(out.epidemic.path, spec.rho, rng);
    std::vector<std::int64_t> leaves(spec.n_days);
    for (std::size_t n = 1; n <= spec.n_days; ++n) {
      leaves[n - 1] = std::min(draw_binomial(out.epidemic.births[n - 1],
                                             spec.genetic_sampling_fraction, rng),
                               out.epidemic.path.x[n]);
    }
    out.tree = simulate_tree(out.epidemic.path, out.true_beta, leaves, rng);
    out.slices = discretize(out.tree.tree, 1.0, static_cast<double>(spec.n_days));
    return out;
  }
  throw InfeasibleError("epidemic went extinct in all " + std::to_string(spec.max_attempts) +
                        " attempts");
}

}  // namespace epi
