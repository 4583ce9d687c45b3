#include "smc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <thread>

#include "errors.hpp"

namespace epi {

Problem Problem::make(FixedRates rates, ObservedSeries observed,
                      std::vector<DayGenetics> genetics, std::size_t n_days) {
  Problem p;
  p.rates = rates;
  if (n_days == 0) n_days = std::max(observed.size(), genetics.size());
  if (observed.size() > n_days || genetics.size() > n_days) {
    throw InvalidArgument("data extends beyond the requested number of days");
  }
  // Sparse sources are aligned to the end of the window.
  const std::size_t obs_pad = n_days - observed.size();
  p.observed.y.assign(obs_pad, std::nullopt);
  p.observed.y.insert(p.observed.y.end(), observed.y.begin(), observed.y.end());
  const std::size_t gen_pad = n_days - genetics.size();
  p.genetics.assign(gen_pad, DayGenetics{});
  p.genetics.insert(p.genetics.end(), genetics.begin(), genetics.end());
  p.validate();
  return p;
}

void Problem::validate() const {
  if (!(rates.gamma > 0.0)) throw InvalidArgument("gamma must be positive");
  if (genetics.size() != observed.size()) {
    throw InvalidArgument("observed series and tree slices cover different numbers of days");
  }
  if (fixed_beta_mode() && fixed_beta.size() != observed.size()) {
    throw InvalidArgument("fixed birth rates must cover every day");
  }
  for (std::size_t n = 0; n < observed.size(); ++n) {
    if (observed.y[n] && *observed.y[n] < 0) throw InvalidArgument("negative observed count");
    const auto& g = genetics[n];
    const std::int64_t pairs = g.a < 2 ? 0 : g.a * (g.a - 1) / 2;
    if (g.a < 0 || g.c < 0 || g.c > pairs) {
      throw InvalidArgument("day " + std::to_string(n + 1) +
                            " has more coalescences than lineage pairs");
    }
  }
}

ParticleHistory::ParticleHistory(std::size_t n_days, std::size_t particles, std::int64_t x0)
    : n_days_(n_days),
      particles_(particles),
      beta_(n_days * particles),
      x_((n_days + 1) * particles),
      logw_(n_days * particles),
      ancestors_(n_days * particles),
      resampled_(n_days, 0),
      increments_(n_days, 0.0) {
  std::fill(x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(particles), x0);
}

double negbin_mixture_weight(double rho) { return std::min(rho / 0.1, 0.95); }

double nonnegative_log_mass(std::int64_t x_prev, double beta, FixedRates rates) {
  if (x_prev <= 0) return 0.0;
  const double xp = static_cast<double>(x_prev);
  const double mu_death = rates.gamma * xp;
  const double mu_birth = beta * xp;
  const double m = xp + 1.0;
  // Going negative needs D >= x_prev + 1; Chernoff-bound that first.
  if (mu_death < m) {
    const double log_bound = -mu_death + m * (1.0 + std::log(mu_death) - std::log(m));
    if (log_bound < -45.0) return 0.0;
  }
  // P(D - B >= m) = sum_{d >= m} P(D = d) P(B <= d - m). Successive terms
  // follow from t_{d+1} / t_d = mu_death / (d + 1) * F(j + 1) / F(j) with
  // F the Poisson(mu_birth) cdf, F(j + 1) / F(j) = 1 + q_j mu_birth / (j + 1)
  // and q_j = P(B = j) / F(j).
  const double log_start = poisson_log_pmf(x_prev + 1, mu_death) - mu_birth;
  double log_ref = log_start;
  double sum = 1.0;
  double cur = 1.0;
  double q = 1.0;
  for (std::int64_t j = 0;; ++j) {
    const double jd = static_cast<double>(j);
    const double grow = q * mu_birth / (jd + 1.0);
    const double ratio = mu_death / (m + jd + 1.0) * (1.0 + grow);
    q = grow / (1.0 + grow);
    cur *= ratio;
    if (cur > 1e100) {
      log_ref += std::log(cur);
      sum /= cur;
      cur = 1.0;
    }
    sum += cur;
    if (ratio < 1.0 && cur <= 1e-18 * sum) break;
    if (cur == 0.0) break;
  }
  const double tail = std::exp(log_ref + std::log(sum));
  return std::log1p(-std::min(tail, 1.0));
}

namespace {

// Inversion for small means, std's rejection sampler otherwise.
class PoissonSampler {
 public:
  explicit PoissonSampler(double mean) : mean_(mean) {
    if (mean_ < 30.0) {
      start_ = std::exp(-mean_);
    } else {
      large_ = std::poisson_distribution<std::int64_t>(mean_);
    }
  }

  std::int64_t operator()(Rng& rng) {
    if (!(mean_ > 0.0)) return 0;
    if (mean_ >= 30.0) return large_(rng);
    const double u = rng.uniform();
    double p = start_;
    double cdf = p;
    std::int64_t k = 0;
    while (u >= cdf && k < 1000) {
      ++k;
      p *= mean_ / static_cast<double>(k);
      cdf += p;
    }
    return k;
  }

 private:
  double mean_;
  double start_ = 0.0;
  std::poisson_distribution<std::int64_t> large_;
};

std::int64_t draw_skellam_nonnegative(std::int64_t x_prev, double beta, FixedRates rates,
                                      Rng& rng) {
  const double xp = static_cast<double>(x_prev);
  PoissonSampler births(beta * xp);
  PoissonSampler deaths(rates.gamma * xp);
  for (;;) {
    const std::int64_t b = births(rng);
    const std::int64_t next = x_prev + b - deaths(rng);
    if (next >= 0) return next;
  }
}

std::int64_t draw_negbin_total(std::int64_t y, double rho, Rng& rng) {
  if (rho >= 1.0) return y;
  return y + std::negative_binomial_distribution<std::int64_t>(y, rho)(rng);
}

// Day-level constants of the proposal and the observation density.
struct DayTerms {
  std::optional<std::int64_t> y;
  double rho = 1.0;
  bool data_driven = false;
  double mix = 0.0;
  double log_mix = 0.0, log_skellam_share = 0.0;
  double log_rho = 0.0, log_miss = 0.0;
  double negbin_const = 0.0;

  DayTerms(std::optional<std::int64_t> y_, double rho_) : y(y_), rho(rho_) {
    log_rho = std::log(rho);
    log_miss = rho < 1.0 ? std::log1p(-rho) : kNegInf;
    data_driven = y && *y > 0;
    if (data_driven) {
      mix = negbin_mixture_weight(rho);
      log_mix = std::log(mix);
      log_skellam_share = std::log1p(-mix);
      negbin_const = static_cast<double>(*y) * log_rho - log_factorial(*y - 1);
    }
  }

  // Failures k before the y-th success.
  double negbin(std::int64_t k) const {
    if (k < 0) return kNegInf;
    if (rho >= 1.0) return k == 0 ? 0.0 : kNegInf;
    return negbin_const + log_factorial(k + *y - 1) - log_factorial(k) +
           static_cast<double>(k) * log_miss;
  }

  double mixture(std::int64_t x_next, double log_transition, double log_mass) const {
    const double skellam = log_transition - log_mass;
    if (!data_driven) return skellam;
    return log_add(log_mix + negbin(x_next - *y), log_skellam_share + skellam);
  }

  double observation(std::int64_t x) const {
    if (!y) return 0.0;
    const std::int64_t k = *y;
    if (k > x) return kNegInf;
    const double hit = k == 0 ? 0.0 : static_cast<double>(k) * log_rho;
    const double miss = k == x ? 0.0 : static_cast<double>(x - k) * log_miss;
    return log_factorial(x) - log_factorial(k) - log_factorial(x - k) + hit + miss;
  }
};

PrevalenceDraw draw_prevalence(std::int64_t x_prev, double beta, FixedRates rates,
                               const DayTerms& day, Rng& rng) {
  PrevalenceDraw d;
  if (x_prev <= 0) return d;
  if (day.data_driven && rng.uniform() < day.mix) {
    d.x = draw_negbin_total(*day.y, day.rho, rng);
  } else {
    d.x = draw_skellam_nonnegative(x_prev, beta, rates, rng);
  }
  d.log_transition = latent_step_log_pmf(x_prev, d.x, beta, rates);
  d.log_density = day.mixture(d.x, d.log_transition, nonnegative_log_mass(x_prev, beta, rates));
  return d;
}

double data_log_terms(std::int64_t x_next, double beta, const DayTerms& day, std::int64_t a,
                      std::int64_t c) {
  const double coal = coal_slice_log_pmf(a, c, beta, x_next);
  if (coal == kNegInf) return kNegInf;
  return coal + day.observation(x_next);
}

}  // namespace

PrevalenceDraw propose_prevalence(std::int64_t x_prev, double beta, FixedRates rates,
                                  std::optional<std::int64_t> y, double rho, Rng& rng) {
  return draw_prevalence(x_prev, beta, rates, DayTerms(y, rho), rng);
}

double prevalence_proposal_log_density(std::int64_t x_prev, std::int64_t x_next, double beta,
                                       FixedRates rates, std::optional<std::int64_t> y,
                                       double rho) {
  if (x_next < 0) return kNegInf;
  if (x_prev <= 0) return x_next == 0 ? 0.0 : kNegInf;
  return DayTerms(y, rho).mixture(x_next, latent_step_log_pmf(x_prev, x_next, beta, rates),
                                  nonnegative_log_mass(x_prev, beta, rates));
}

double step_log_weight(std::int64_t x_prev, std::int64_t x_next, double beta, FixedRates rates,
                       std::optional<std::int64_t> y, double rho, std::int64_t a, std::int64_t c,
                       double log_proposal_density) {
  const double transition = latent_step_log_pmf(x_prev, x_next, beta, rates);
  if (transition == kNegInf) return kNegInf;
  const double data = data_log_terms(x_next, beta, DayTerms(y, rho), a, c);
  if (data == kNegInf) return kNegInf;
  return transition + data - log_proposal_density;
}

double ess(std::span<const double> weights) {
  double sq = 0.0;
  for (double w : weights) sq += w * w;
  return 1.0 / sq;
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  std::vector<double> w(log_weights.size(), 0.0);
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  if (top == kNegInf) return w;
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = std::exp(log_weights[k] - top);
    total += w[k];
  }
  for (double& v : w) v /= total;
  return w;
}

namespace {

std::vector<double> cumulative(std::span<const double> weights) {
  std::vector<double> cum(weights.size());
  std::partial_sum(weights.begin(), weights.end(), cum.begin());
  const double total = cum.empty() ? 0.0 : cum.back();
  if (!(total > 0.0)) throw DegenerateError("all particle weights are zero");
  for (double& v : cum) v /= total;
  cum.back() = 1.0;
  return cum;
}

// Smallest index whose cumulative weight reaches u; zero-weight particles
// are never selected because their cumulative value repeats an earlier one.
std::uint32_t search(const std::vector<double>& cum, double u) {
  const auto it = std::lower_bound(cum.begin(), cum.end(), u);
  return static_cast<std::uint32_t>(std::min<std::ptrdiff_t>(
      it - cum.begin(), static_cast<std::ptrdiff_t>(cum.size()) - 1));
}

std::size_t sample_index(std::span<const double> log_weights, Rng& rng) {
  const auto w = normalize_log_weights(log_weights);
  return search(cumulative(w), rng.uniform_open());
}

}  // namespace

std::vector<std::uint32_t> systematic_resample(std::span<const double> weights, Rng& rng) {
  const auto cum = cumulative(weights);
  const std::size_t k_count = weights.size();
  const double step = 1.0 / static_cast<double>(k_count);
  const double u1 = rng.uniform_open() * step;
  std::vector<std::uint32_t> out(k_count);
  std::size_t j = 0;
  for (std::size_t i = 0; i < k_count; ++i) {
    const double u = u1 + static_cast<double>(i) * step;
    while (j + 1 < k_count && cum[j] < u) ++j;
    out[i] = static_cast<std::uint32_t>(j);
  }
  return out;
}

std::vector<std::uint32_t> multinomial_resample(std::span<const double> weights, Rng& rng) {
  const auto cum = cumulative(weights);
  std::vector<std::uint32_t> out(weights.size());
  for (auto& a : out) a = search(cum, rng.uniform_open());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

template <typename F>
void parallel_for(std::size_t count, std::size_t threads, F&& body) {
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  const std::size_t chunk = (count + threads - 1) / threads;
  for (std::size_t t = 1; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t * chunk; i < std::min(count, (t + 1) * chunk); ++i) body(i);
    });
  }
  for (std::size_t i = 0; i < std::min(count, chunk); ++i) body(i);
  for (auto& th : pool) th.join();
}

}  // namespace

class SmcRunner {
 public:
  SmcRunner(const Theta& theta, const Problem& problem, const SmcOptions& options,
            std::uint64_t seed)
      : theta_(theta), problem_(problem), options_(options), seed_(seed) {}

  SmcEstimate run() {
    const std::size_t n_days = problem_.n_days();
    const std::size_t k_count = options_.particles;
    if (k_count < 1) throw InvalidArgument("need at least one particle");
    if (!(options_.ess_threshold > 0.0 && options_.ess_threshold <= 1.0)) {
      throw InvalidArgument("ESS threshold fraction must lie in (0, 1]");
    }
    SmcEstimate est;
    est.history = ParticleHistory(n_days, k_count, theta_.x0);
    ParticleHistory& h = est.history;

    std::vector<std::uint32_t> parent(k_count);
    std::iota(parent.begin(), parent.end(), 0U);
    bool reset = true;  // carried weights start at 1

    for (std::size_t n = 1; n <= n_days; ++n) {
      const std::size_t row = (n - 1) * k_count;
      const DayTerms day(problem_.observed.y[n - 1], theta_.rho);
      const auto& g = problem_.genetics[n - 1];
      auto advance = [&](std::size_t k) {
        const std::uint32_t p = parent[k];
        Rng rng = Rng::stream(seed_, n, k);
        const double beta = propose_beta(n, p, h, rng);
        const std::int64_t x_prev = h.x(n - 1, p);
        const double xp = static_cast<double>(x_prev);
        std::int64_t x_next = x_prev;
        double w = kNegInf;
        if (xp <= kMaxPrevalence && beta * xp <= kMaxPrevalence) {
          const PrevalenceDraw draw = draw_prevalence(x_prev, beta, problem_.rates, day, rng);
          x_next = draw.x;
          if (draw.log_transition != kNegInf &&
              (problem_.x_max < 0 || draw.x <= problem_.x_max)) {
            const double data = data_log_terms(draw.x, beta, day, g.a, g.c);
            if (data != kNegInf) w = draw.log_transition + data - draw.log_density;
          }
        }
        const double carried = reset ? 0.0 : h.logw_[row - k_count + p];
        h.beta_[row + k] = beta;
        h.x_[n * k_count + k] = x_next;
        h.ancestors_[row + k] = p;
        h.logw_[row + k] = carried + w;
      };
      parallel_for(k_count, options_.threads, advance);
      h.completed_ = n;

      const std::span<const double> logw = h.log_weights(n);
      const double top = *std::max_element(logw.begin(), logw.end());
      if (top == kNegInf) {
        est.degenerate = true;
        est.log_likelihood = kNegInf;
        return est;
      }
      const auto weights = normalize_log_weights(logw);
      const bool resample =
          n < n_days && (options_.ess_threshold >= 1.0 ||
                         ess(weights) < options_.ess_threshold * static_cast<double>(k_count));
      if (resample || n == n_days) {
        double total = 0.0;
        for (double lw : logw) total += std::exp(lw - top);
        const double inc = top + std::log(total / static_cast<double>(k_count));
        h.increments_[n - 1] = inc;
        est.log_likelihood += inc;
      }
      if (resample) {
        Rng rng = Rng::stream(seed_, n, 0xffffffffULL + 1);
        parent = options_.resampling == Resampling::systematic
                     ? systematic_resample(weights, rng)
                     : multinomial_resample(weights, rng);
        h.resampled_[n - 1] = 1;
        ++est.resample_count;
        reset = true;
      } else {
        std::iota(parent.begin(), parent.end(), 0U);
        reset = false;
      }
    }
    return est;
  }

 private:
  double propose_beta(std::size_t n, std::uint32_t p, const ParticleHistory& h, Rng& rng) const {
    if (problem_.fixed_beta_mode()) return problem_.fixed_beta[n - 1];
    if (n == 1) {
      return std::exponential_distribution<double>(beta1_prior_rate(problem_.rates))(rng);
    }
    const double step = std::normal_distribution<double>(0.0, theta_.sigma)(rng);
    return std::fabs(h.beta(n - 1, p) + step);
  }

  const Theta& theta_;
  const Problem& problem_;
  const SmcOptions& options_;
  std::uint64_t seed_;
};

SmcEstimate run_smc(const Theta& theta, const Problem& problem, const SmcOptions& options,
                    std::uint64_t seed) {
  if (!theta.valid()) throw InvalidArgument("theta outside its support");
  return SmcRunner(theta, problem, options, seed).run();
}

namespace {

double transition_log_density(const ParticleHistory& h, const Theta& theta,
                              const Problem& problem, std::size_t n, std::size_t k,
                              double beta_next, std::int64_t x_next) {
  double lp = latent_step_log_pmf(h.x(n, k), x_next, beta_next, problem.rates);
  if (!problem.fixed_beta_mode() && lp != kNegInf) {
    lp += folded_normal_log_pdf(beta_next, h.beta(n, k), theta.sigma);
  }
  return lp;
}

void require_complete(const ParticleHistory& h) {
  if (h.completed_days() != h.n_days() || h.particles() == 0) {
    throw DegenerateError("particle history is degenerate");
  }
  if (h.n_days() > 0) {
    const auto w = h.log_weights(h.n_days());
    if (*std::max_element(w.begin(), w.end()) == kNegInf) {
      throw DegenerateError("particle history is degenerate");
    }
  }
}

}  // namespace

std::vector<double> smoothing_weights(const ParticleHistory& history, const Theta& theta,
                                      const Problem& problem, std::size_t n, double beta_next,
                                      std::int64_t x_next) {
  const std::size_t k_count = history.particles();
  std::vector<double> s(k_count);
  const auto logw = history.log_weights(n);
  for (std::size_t k = 0; k < k_count; ++k) {
    s[k] = logw[k] == kNegInf
               ? kNegInf
               : logw[k] + transition_log_density(history, theta, problem, n, k, beta_next, x_next);
  }
  return normalize_log_weights(s);
}

LatentPath backward_simulate(const ParticleHistory& history, const Theta& theta,
                             const Problem& problem, Rng& rng) {
  require_complete(history);
  const std::size_t n_days = history.n_days();
  LatentPath path;
  path.beta.resize(n_days);
  path.x.resize(n_days + 1);
  path.x[0] = theta.x0;
  if (n_days == 0) return path;
  std::size_t j = sample_index(history.log_weights(n_days), rng);
  path.beta[n_days - 1] = history.beta(n_days, j);
  path.x[n_days] = history.x(n_days, j);
  for (std::size_t n = n_days - 1; n >= 1; --n) {
    const auto w = smoothing_weights(history, theta, problem, n, path.beta[n], path.x[n + 1]);
    j = search(cumulative(w), rng.uniform_open());
    path.beta[n - 1] = history.beta(n, j);
    path.x[n] = history.x(n, j);
  }
  return path;
}

LatentPath trace_genealogy(const ParticleHistory& history, Rng& rng) {
  require_complete(history);
  const std::size_t n_days = history.n_days();
  LatentPath path;
  path.beta.resize(n_days);
  path.x.resize(n_days + 1);
  path.x[0] = history.x(0, 0);
  if (n_days == 0) return path;
  std::size_t j = sample_index(history.log_weights(n_days), rng);
  for (std::size_t n = n_days; n >= 1; --n) {
    path.beta[n - 1] = history.beta(n, j);
    path.x[n] = history.x(n, j);
    j = history.ancestor(n, j);
  }
  return path;
}

}  // namespace epi
