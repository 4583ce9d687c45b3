// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance                 run everything
//   acceptance NAME [NAME...]  run the named checks only
//
// Lines also go to acceptance_results.txt in the working directory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "diagnostics.hpp"
#include "model.hpp"
#include "oracles.hpp"
#include "phylo.hpp"
#include "pmmh.hpp"
#include "simulate.hpp"
#include "smc.hpp"
#include "tune.hpp"

using namespace epi;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

template <class T>
std::vector<double> after_burn_in(const std::vector<T>& v, double fraction) {
  const auto skip = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(v.size())));
  return {v.begin() + static_cast<std::ptrdiff_t>(skip), v.end()};
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome figure_tree() {
  const char* tree =
      "((L7:3.2,L8:2.2):2.8,(((L3:2.2,L4:2.2):1.1,L6:2.3):2.7,(((L1:1.8,L2:1.8):2.4,L5:1.7):1.3,"
      "(L9:0.2,L10:0.2):0.8):2.0):1.0);";
  const TreeSlices s = discretize(parse_newick(tree, 10.0), 1.0, 10.0);
  const std::vector<std::int64_t> a{2, 4, 6, 7, 8, 5, 3, 3, 2};
  const std::vector<std::int64_t> c{0, 1, 0, 1, 3, 2, 0, 1, 1};
  std::ostringstream got;
  for (std::size_t i = 0; i < s.a.size(); ++i) got << (i ? " " : "") << s.a[i] << "/" << s.c[i];
  return {s.a == a && s.c == c, "a/c = " + got.str()};
}

Outcome smc_unbiased() {
  oracle::TinyModel m;
  m.gamma = 0.1;
  m.beta = {0.3, 0.2, 0.25};
  m.y = {2, std::nullopt, 3};
  m.genetics = {{0, 0}, {2, 0}, {3, 1}};
  m.rho = 0.5;
  m.x0 = 5;
  m.x_max = 30;
  const double exact = static_cast<double>(oracle::forward_likelihood(m));

  ObservedSeries obs;
  obs.y = m.y;
  std::vector<DayGenetics> g;
  for (auto [a, cc] : m.genetics) g.push_back({a, cc});
  Problem p = Problem::make(FixedRates{m.gamma}, obs, g);
  p.fixed_beta = m.beta;
  p.x_max = m.x_max;
  p.validate();

  SmcOptions opt;
  opt.particles = 100;
  std::vector<double> z;
  for (std::uint64_t r = 0; r < 500; ++r) {
    const SmcEstimate e = run_smc(Theta{0.05, m.rho, m.x0}, p, opt, mix_key(2024, r));
    z.push_back(std::exp(e.log_likelihood) / exact);
  }
  const double mean = mean_of(z);
  const double se = sd_of(z) / std::sqrt(500.0);
  return {std::fabs(mean - 1.0) < 3 * se,
          fmt("mean L/L_exact = %.5f, se %.5f, L_exact = %.6g", mean, se, exact)};
}

Outcome distribution_oracles() {
  constexpr int kPoints = 250;
  std::mt19937_64 gen(7);
  std::map<std::string, double> worst;

  {
    std::uniform_real_distribution<double> rate(0.0, 50.0);
    std::uniform_int_distribution<int> offset(-40, 40);
    double w = 0.0;
    for (int i = 0; i < kPoints; ++i) {
      const double mu1 = rate(gen), mu2 = rate(gen);
      const std::int64_t k = std::llround(mu1 - mu2) + offset(gen);
      const double want = static_cast<double>(oracle::skellam_convolution(k, mu1, mu2));
      w = std::max(w, std::fabs(std::exp(skellam_log_pmf(k, mu1, mu2)) - want));
    }
    worst["skellam"] = w;
  }
  {
    std::uniform_int_distribution<int> n_dist(0, 400);
    std::uniform_real_distribution<double> p_dist(0.001, 0.999);
    double w = 0.0;
    for (int i = 0; i < kPoints; ++i) {
      const std::int64_t n = n_dist(gen);
      const double p = p_dist(gen);
      const std::int64_t k = std::binomial_distribution<std::int64_t>(n, p)(gen);
      const double want = static_cast<double>(oracle::binomial_pmf(k, n, p));
      w = std::max(w, std::fabs(std::exp(binomial_log_pmf(k, n, p)) - want));
    }
    worst["binomial"] = w;
  }
  {
    std::uniform_real_distribution<double> r_dist(0.05, 600.0), p_dist(0.02, 0.98);
    double w = 0.0;
    for (int i = 0; i < kPoints; ++i) {
      const double r = r_dist(gen), p = p_dist(gen);
      const double mean = r * (1 - p) / p;
      const std::int64_t k =
          std::uniform_int_distribution<std::int64_t>(0, static_cast<std::int64_t>(3 * mean + 10))(gen);
      const double want = static_cast<double>(oracle::negbin_pmf(k, r, p));
      w = std::max(w, std::fabs(std::exp(negbin_log_pmf(k, r, p)) - want));
    }
    worst["negative binomial"] = w;
  }
  {
    std::uniform_real_distribution<double> mu_dist(-1.0, 1.0), sigma_dist(0.01, 1.0), x_dist(0.0, 2.0);
    double w = 0.0;
    for (int i = 0; i < kPoints; ++i) {
      const double mu = mu_dist(gen), sigma = sigma_dist(gen), x = x_dist(gen);
      const double want = static_cast<double>(oracle::folded_normal_pdf(x, mu, sigma));
      w = std::max(w, std::fabs(std::exp(folded_normal_log_pdf(x, mu, sigma)) - want));
    }
    worst["folded normal"] = w;
  }
  {
    std::uniform_int_distribution<int> a_dist(0, 40);
    std::uniform_real_distribution<double> beta_dist(0.01, 3.0);
    double w = 0.0;
    for (int i = 0; i < kPoints; ++i) {
      const std::int64_t a = a_dist(gen);
      const std::int64_t pairs = a * (a - 1) / 2;
      const std::int64_t x =
          std::uniform_int_distribution<std::int64_t>(std::max<std::int64_t>(a, 1), 400)(gen);
      const std::int64_t c =
          std::uniform_int_distribution<std::int64_t>(0, std::min<std::int64_t>(pairs, 6))(gen);
      const double beta = beta_dist(gen);
      const double want = static_cast<double>(oracle::coal_slice_pmf(a, c, beta, x));
      w = std::max(w, std::fabs(std::exp(coal_slice_log_pmf(a, c, beta, x)) - want));
    }
    worst["coalescent slice"] = w;
  }

  bool pass = true;
  std::string detail = fmt("%d points each; max abs error:", kPoints);
  for (const auto& [name, w] : worst) {
    pass = pass && w < 1e-10;
    detail += fmt(" %s %.2e,", name.c_str(), w);
  }
  detail.pop_back();
  return {pass, detail};
}

Outcome tuning_arithmetic() {
  TuneSpec open;
  open.floor = 1;
  open.cap = 1000000;
  open.k_s = 500;
  bool pass = true;
  for (double v : {0.05, 0.8464, 1.6928, 3.3, 17.0}) {
    const TuneReport r = choose_particles_from_variances(open, {v});
    pass = pass && r.k_raw_max == 500.0 * v / (0.92 * 0.92) &&
           r.k_opt == static_cast<std::size_t>(std::llround(500.0 * v / (0.92 * 0.92)));
  }
  TuneSpec spec;  // floor 1000, cap 25000
  spec.k_s = 500;
  const std::size_t low = choose_particles_from_variances(spec, {0.2}).k_opt;
  const std::size_t mid = choose_particles_from_variances(spec, {0.4, 5.0, 1.0}).k_opt;
  const std::size_t high = choose_particles_from_variances(spec, {100.0}).k_opt;
  pass = pass && low == 1000 && mid == std::llround(500.0 * 5.0 / 0.8464) && high == 25000;
  return {pass, fmt("K_s*v/0.92^2 exact; clamps: 0.2 -> %zu, max(0.4,5,1) -> %zu, 100 -> %zu", low,
                    mid, high)};
}

// ---------------------------------------------------------------------------
// Peaked scenario at 5% prevalence and 5% genetic sampling.

constexpr std::size_t kIterations = 20000;
constexpr double kBurnIn = 0.1;

Problem peaked_problem(const SimOutput& sim) {
  return Problem::make(FixedRates{sim.spec.gamma}, sim.observed, sim.tree.records, sim.spec.n_days);
}

ChainConfig peaked_chain(std::uint64_t seed, bool paths) {
  ChainConfig c;
  c.iterations = kIterations;
  c.init_theta = Theta{0.05, 0.03, 5};
  c.seed = seed;
  c.store_paths = paths;
  return c;
}

struct PeakedRun {
  SimOutput sim;
  ChainOutput chain;
  double seconds = 0.0;
};

const std::vector<PeakedRun>& peaked_runs() {
  static const std::vector<PeakedRun> runs = [] {
    std::vector<PeakedRun> out;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      PeakedRun r;
      r.sim = run_scenario(ScenarioSpec::peaked_reference(0.05, 0.05), seed);
      SmcOptions opt;
      opt.particles = 1000;
      const auto t0 = std::chrono::steady_clock::now();
      r.chain = run_pmmh(peaked_chain(seed, true), peaked_problem(r.sim), opt, PriorConfig{});
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "  peaked seed %llu: %.0f s\n", static_cast<unsigned long long>(seed),
                   r.seconds);
      out.push_back(std::move(r));
    }
    return out;
  }();
  return runs;
}

Outcome peaked_reproduction() {
  std::vector<double> rmse, width, coverage, seconds;
  std::string per_seed;
  for (const PeakedRun& r : peaked_runs()) {
    const PosteriorSummary s = summarize(r.chain, FixedRates{r.sim.spec.gamma}, kBurnIn);
    const Score sc = score_vs_truth(s, r.sim.true_beta);
    rmse.push_back(sc.rmse);
    width.push_back(sc.mean_ci_width);
    coverage.push_back(sc.coverage);
    seconds.push_back(r.seconds);
    per_seed += fmt(" [rmse %.3f width %.3f cover %.2f %.0fs]", sc.rmse, sc.mean_ci_width,
                    sc.coverage, r.seconds);
  }
  const double m_rmse = median3(rmse), m_width = median3(width), m_cov = median3(coverage);
  const double max_seconds = *std::max_element(seconds.begin(), seconds.end());
  const bool pass = m_rmse <= 0.12 && m_width >= 0.10 && m_width <= 0.50 && m_cov >= 0.8 &&
                    max_seconds <= 1800.0;
  return {pass, fmt("median rmse %.3f, CI width %.3f, coverage %.2f;", m_rmse, m_width, m_cov) +
                    per_seed};
}

Outcome rho_learning() {
  int passing = 0;
  std::string per_seed;
  for (const PeakedRun& r : peaked_runs()) {
    const std::vector<double> rho = after_burn_in(r.chain.rho, kBurnIn);
    const double mean = mean_of(rho);
    const double ks = ks_distance_uniform(rho);
    const bool ok = std::fabs(mean - 0.05) < std::fabs(mean - 0.5) && ks > 0.5;
    passing += ok;
    per_seed += fmt(" [mean %.4f KS %.3f]", mean, ks);
  }
  return {passing >= 2, fmt("%d of 3 seeds;", passing) + per_seed};
}

Outcome adaptive_targeting() {
  std::vector<double> rates;
  std::string per_seed;
  for (const PeakedRun& r : peaked_runs()) {
    const double a = r.chain.acceptance_rate(kIterations / 2);
    rates.push_back(a);
    per_seed += fmt(" %.4f", a);
  }
  const double m = median3(rates);
  return {m >= 0.06 && m <= 0.14, fmt("median second-half acceptance %.4f; seeds:", m) + per_seed};
}

Outcome pseudo_marginal() {
  const SimOutput sim = run_scenario(ScenarioSpec::peaked_reference(0.05, 0.05), 1);
  const Problem p = peaked_problem(sim);
  struct Stats {
    double mean[3];
    double se[3];
  };
  const auto chain_stats = [&](std::size_t particles, std::uint64_t seed) {
    SmcOptions opt;
    opt.particles = particles;
    const auto t0 = std::chrono::steady_clock::now();
    const ChainOutput c = run_pmmh(peaked_chain(seed, false), p, opt, PriorConfig{});
    std::fprintf(stderr, "  K=%zu: %.0f s\n", particles,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    const std::vector<double> cols[3] = {after_burn_in(c.sigma, kBurnIn), after_burn_in(c.rho, kBurnIn),
                                         after_burn_in(c.x0, kBurnIn)};
    Stats s{};
    for (int j = 0; j < 3; ++j) {
      s.mean[j] = mean_of(cols[j]);
      s.se[j] = sd_of(cols[j]) / std::sqrt(effective_sample_size(cols[j]));
    }
    return s;
  };
  const Stats small = chain_stats(500, 501);
  const Stats large = chain_stats(2000, 2001);
  const char* names[3] = {"sigma", "rho", "x0"};
  bool pass = true;
  std::string detail;
  for (int j = 0; j < 3; ++j) {
    const double diff = std::fabs(small.mean[j] - large.mean[j]);
    const double bound = small.se[j] + large.se[j];
    pass = pass && diff < bound;
    detail += fmt("%s%s %.4g vs %.4g (|d| %.3g, se sum %.3g)", j ? "; " : "", names[j], small.mean[j],
                  large.mean[j], diff, bound);
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// Constant birth rate 0.3: diversity of day-1 states in sampled trajectories.

Outcome path_degeneracy() {
  const SimOutput sim = run_scenario(ScenarioSpec::constant_reference(), 1);
  const Problem p = Problem::make(FixedRates{sim.spec.gamma}, sim.observed, sim.tree.records,
                                  sim.spec.n_days);
  const Theta theta{0.01, 0.05, sim.spec.x0};
  constexpr int kRuns = 100;
  constexpr int kDraws = 100;

  SmcOptions improved;
  improved.particles = 1000;
  SmcOptions naive = improved;
  naive.resampling = Resampling::multinomial;
  naive.ess_threshold = 1.0;

  using State = std::pair<double, std::int64_t>;
  std::set<State> across_improved, across_naive;
  double within_improved = 0.0, within_naive = 0.0;
  for (int r = 0; r < kRuns; ++r) {
    const SmcEstimate a = run_smc(theta, p, improved, mix_key(77, r, 1));
    const SmcEstimate b = run_smc(theta, p, naive, mix_key(77, r, 2));
    if (a.degenerate || b.degenerate) return {false, fmt("run %d degenerate", r)};
    Rng rng_a = Rng::stream(78, static_cast<std::uint64_t>(r));
    Rng rng_b = Rng::stream(79, static_cast<std::uint64_t>(r));
    std::set<State> in_a, in_b;
    for (int d = 0; d < kDraws; ++d) {
      const LatentPath pa = backward_simulate(a.history, theta, p, rng_a);
      const LatentPath pb = trace_genealogy(b.history, rng_b);
      in_a.insert({pa.beta[0], pa.x[1]});
      in_b.insert({pb.beta[0], pb.x[1]});
      if (d == 0) {
        across_improved.insert({pa.beta[0], pa.x[1]});
        across_naive.insert({pb.beta[0], pb.x[1]});
      }
    }
    within_improved += static_cast<double>(in_a.size()) / kRuns;
    within_naive += static_cast<double>(in_b.size()) / kRuns;
  }
  return {within_improved >= 5.0 * within_naive,
          fmt("distinct day-1 states per run among %d draws: %.2f vs %.2f (ratio %.1f); one draw per "
              "run across %d runs: %zu vs %zu",
              kDraws, within_improved, within_naive, within_improved / within_naive, kRuns,
              across_improved.size(), across_naive.size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"figure_tree", figure_tree},
      {"smc_unbiased", smc_unbiased},
      {"distribution_oracles", distribution_oracles},
      {"tuning_arithmetic", tuning_arithmetic},
      {"path_degeneracy", path_degeneracy},
      {"peaked_reproduction", peaked_reproduction},
      {"rho_learning", rho_learning},
      {"adaptive_targeting", adaptive_targeting},
      {"pseudo_marginal", pseudo_marginal},
  };
  std::set<std::string> wanted(argv + 1, argv + argc);
  std::ofstream log("acceptance_results.txt");
  int failures = 0;
  for (const auto& [name, fn] : checks) {
    if (!wanted.empty() && !wanted.count(name)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string line =
        fmt("%s %s (%.1f s): ", o.pass ? "PASS" : "FAIL", name.c_str(), s) + o.detail;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    log << line << std::endl;
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
