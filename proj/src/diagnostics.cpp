#include "diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "errors.hpp"

namespace epi {

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

IntervalSummary summarize_samples(std::vector<double> samples) {
  if (samples.empty()) throw InvalidArgument("no samples to summarize");
  std::sort(samples.begin(), samples.end());
  IntervalSummary s;
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) /
           static_cast<double>(samples.size());
  s.lo = quantile_sorted(samples, 0.025);
  s.hi = quantile_sorted(samples, 0.975);
  return s;
}

PosteriorSummary summarize(const ChainOutput& chain, FixedRates rates, double burn_in_fraction) {
  if (chain.size() == 0) throw InvalidArgument("empty chain");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) {
    throw InvalidArgument("burn-in fraction must lie in [0, 1)");
  }
  if (!(rates.gamma > 0.0)) throw InvalidArgument("gamma must be positive");
  PosteriorSummary s;
  s.burn_in = static_cast<std::size_t>(std::floor(burn_in_fraction * static_cast<double>(chain.size())));
  const std::size_t start = s.burn_in;
  s.samples = chain.size() - start;
  s.acceptance_rate = chain.acceptance_rate(start);

  auto tail = [&](const auto& v) {
    std::vector<double> out;
    out.reserve(s.samples);
    for (std::size_t i = start; i < v.size(); ++i) out.push_back(static_cast<double>(v[i]));
    return out;
  };
  s.sigma = summarize_samples(tail(chain.sigma));
  s.rho = summarize_samples(tail(chain.rho));
  s.x0 = summarize_samples(tail(chain.x0));

  const bool have_paths = chain.beta.size() == chain.size() * chain.n_days && chain.n_days > 0;
  if (!have_paths) return s;
  for (std::size_t day = 1; day <= chain.n_days; ++day) {
    std::vector<double> b, x;
    b.reserve(s.samples);
    x.reserve(s.samples);
    for (std::size_t i = start; i < chain.size(); ++i) {
      b.push_back(chain.beta_at(i, day));
      x.push_back(static_cast<double>(chain.x_at(i, day)));
    }
    const IntervalSummary bs = summarize_samples(b);
    s.beta.push_back(bs);
    s.rt.push_back({bs.mean / rates.gamma, bs.lo / rates.gamma, bs.hi / rates.gamma});
    s.x.push_back(summarize_samples(std::move(x)));
  }
  return s;
}

Score score_vs_truth(const PosteriorSummary& summary, const std::vector<double>& true_beta) {
  if (summary.beta.size() != true_beta.size()) {
    throw InvalidArgument("summary covers " + std::to_string(summary.beta.size()) +
                          " days but the truth has " + std::to_string(true_beta.size()));
  }
  Score sc;
  if (true_beta.empty()) return sc;
  double se = 0.0, width = 0.0, covered = 0.0;
  for (std::size_t n = 0; n < true_beta.size(); ++n) {
    const auto& b = summary.beta[n];
    se += (b.mean - true_beta[n]) * (b.mean - true_beta[n]);
    width += b.hi - b.lo;
    if (true_beta[n] >= b.lo && true_beta[n] <= b.hi) covered += 1.0;
  }
  const double n = static_cast<double>(true_beta.size());
  sc.rmse = std::sqrt(se / n);
  sc.mean_ci_width = width / n;
  sc.coverage = covered / n;
  return sc;
}

double effective_sample_size(const std::vector<double>& chain) {
  const std::size_t n = chain.size();
  if (n < 2) return static_cast<double>(n);
  if (std::all_of(chain.begin(), chain.end(), [&](double v) { return v == chain.front(); })) {
    return 1.0;
  }
  const double mean = std::accumulate(chain.begin(), chain.end(), 0.0) / static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (chain[i] - mean) * (chain[i + lag] - mean);
    return s / static_cast<double>(n);
  };
  const double g0 = autocov(0);
  if (!(g0 > 0.0)) return 1.0;
  // Initial monotone sequence: pairs are cut at the first non-positive one
  // and forced non-increasing.
  double sum = 0.0;
  double last = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = (m == 0 ? g0 : autocov(2 * m)) + autocov(2 * m + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, last);
    last = pair;
    sum += pair;
  }
  const double tau = std::max((2.0 * sum - g0) / g0, 1.0 / static_cast<double>(n));
  return static_cast<double>(n) / tau;
}

ChainHealth chain_health(const ChainOutput& chain) {
  if (chain.size() == 0) throw InvalidArgument("empty chain");
  ChainHealth h;
  h.acceptance_rate = chain.acceptance_rate();
  std::vector<double> x0(chain.x0.begin(), chain.x0.end());
  h.ess_sigma = effective_sample_size(chain.sigma);
  h.ess_rho = effective_sample_size(chain.rho);
  h.ess_x0 = effective_sample_size(x0);
  std::size_t run = 0;
  for (char a : chain.accepted) {
    run = a ? 0 : run + 1;
    h.longest_rejection_run = std::max(h.longest_rejection_run, run);
  }
  h.flagged = h.ess_sigma <= 1.0 || h.ess_rho <= 1.0 || h.ess_x0 <= 1.0;
  return h;
}

double ks_distance_uniform(std::vector<double> samples) {
  if (samples.empty()) throw InvalidArgument("no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double t = std::clamp(samples[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - t, t - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace epi
