#include "pmmh.hpp"

#include <cmath>
#include <random>
#include <utility>

#include "errors.hpp"

namespace epi {
namespace {

double logit(double p) { return std::log(p) - std::log1p(-p); }

// Stable log(p (1 - p)) for p = sigmoid(z).
double log_sigmoid_derivative(double z) {
  const double a = std::fabs(z);
  return -a - 2.0 * std::log1p(std::exp(-a));
}

std::int64_t round_initial(double v) {
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(v)));
}

double rounding_cell_width(std::int64_t x0) { return x0 == 1 ? 1.5 : 1.0; }

}  // namespace

ThetaU to_unconstrained(const Theta& theta) {
  if (!theta.valid() || theta.rho >= 1.0) {
    throw InvalidArgument("theta must satisfy sigma > 0, 0 < rho < 1, x0 >= 1");
  }
  return {std::log(theta.sigma), logit(theta.rho), std::log(static_cast<double>(theta.x0))};
}

Theta from_unconstrained(const ThetaU& u) {
  Theta t;
  t.sigma = std::exp(u[0]);
  t.rho = 1.0 / (1.0 + std::exp(-u[1]));
  t.x0 = round_initial(std::exp(u[2]));
  return t;
}

double log_jacobian(const ThetaU& u) {
  const std::int64_t x0 = round_initial(std::exp(u[2]));
  return u[0] + log_sigmoid_derivative(u[1]) + u[2] - std::log(rounding_cell_width(x0));
}

ThetaProposal propose_theta(const ThetaU& current, const Eigen::Matrix3d& cov, double scale,
                            Rng& rng) {
  Eigen::LLT<Eigen::Matrix3d> llt(cov);
  if (llt.info() != Eigen::Success) throw InvalidArgument("proposal covariance is not positive definite");
  std::normal_distribution<double> z;
  const Eigen::Vector3d step(z(rng), z(rng), z(rng));
  ThetaProposal p;
  const Eigen::Vector3d move = llt.matrixL() * step;
  p.u = current + scale * move;
  p.theta = from_unconstrained(p.u);
  p.log_ratio = log_jacobian(p.u) - log_jacobian(current);
  return p;
}

AdaptiveProposal::AdaptiveProposal(const ThetaU& start, const Eigen::Matrix3d& initial_cov,
                                   double initial_scale, double target_acceptance, double decay,
                                   double prior_weight)
    : log_scale_(std::log(initial_scale)),
      target_(target_acceptance),
      decay_(decay),
      prior_weight_(prior_weight),
      mean_(start),
      cov_(initial_cov) {}

void AdaptiveProposal::adapt(std::size_t iteration, double alpha, const ThetaU& state) {
  const double i = static_cast<double>(iteration);
  log_scale_ += std::pow(i, -decay_) * (alpha - target_);
  const double w = 1.0 / (i + prior_weight_);
  const ThetaU d = state - mean_;
  mean_ += w * d;
  cov_ = (1.0 - w) * cov_ + w * (1.0 - w) * d * d.transpose();
  if (Eigen::LLT<Eigen::Matrix3d>(cov_).info() != Eigen::Success) {
    cov_ += 1e-8 * Eigen::Matrix3d::Identity();
    ++jitter_events_;
  }
}

LikelihoodEstimator smc_estimator(std::shared_ptr<const Problem> problem, SmcOptions options) {
  return [problem, options](const Theta& theta, std::uint64_t seed) {
    auto est = std::make_shared<SmcEstimate>(run_smc(theta, *problem, options, seed));
    LikelihoodEstimate out;
    out.log_likelihood = est->log_likelihood;
    if (!est->degenerate) {
      out.sample_path = [est, problem, theta](Rng& rng) {
        return backward_simulate(est->history, theta, *problem, rng);
      };
    }
    return out;
  };
}

void ChainConfig::validate() const {
  if (iterations < 1) throw InvalidArgument("iterations must be at least 1");
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) {
    throw InvalidArgument("target acceptance must lie in (0, 1)");
  }
  if (!(adaptation_decay > 0.5 && adaptation_decay <= 1.0)) {
    throw InvalidArgument("adaptation decay exponent must lie in (0.5, 1]");
  }
  if (!(initial_scale > 0.0)) throw InvalidArgument("initial scale must be positive");
  if (!init_theta.valid() || init_theta.rho >= 1.0) {
    throw InvalidArgument("initial theta must satisfy sigma > 0, 0 < rho < 1, x0 >= 1");
  }
  if (Eigen::LLT<Eigen::Matrix3d>(initial_cov).info() != Eigen::Success) {
    throw InvalidArgument("initial covariance must be positive definite");
  }
}

double ChainOutput::acceptance_rate(std::size_t from) const {
  if (from >= accepted.size()) return 0.0;
  std::size_t n = 0;
  for (std::size_t i = from; i < accepted.size(); ++i) n += accepted[i] != 0;
  return static_cast<double>(n) / static_cast<double>(accepted.size() - from);
}

ChainOutput run_pmmh(const ChainConfig& config, const LikelihoodEstimator& estimator,
                     std::size_t n_days, const PriorConfig& prior, const ChainObserver& observer) {
  config.validate();
  ChainOutput out;
  out.n_days = n_days;
  const std::size_t iters = config.iterations;
  out.sigma.reserve(iters);
  out.rho.reserve(iters);
  out.x0.reserve(iters);
  out.log_lik.reserve(iters);
  out.accepted.reserve(iters);
  if (config.store_paths) {
    out.beta.reserve(iters * n_days);
    out.x.reserve(iters * n_days);
  }

  ThetaU u = to_unconstrained(config.init_theta);
  Theta theta = from_unconstrained(u);
  double log_prior = log_theta_prior(theta, prior);
  if (log_prior == kNegInf) throw InvalidArgument("initial theta has zero prior density");

  LikelihoodEstimate current = estimator(theta, mix_key(config.seed, 0, 1));
  ++out.estimator_calls;
  if (current.log_likelihood == kNegInf) {
    throw DegenerateError(
        "particle filter is degenerate at the initial theta; try a different starting point or "
        "more particles");
  }
  LatentPath path;
  if (config.store_paths && current.sample_path) {
    Rng rng = Rng::stream(config.seed, 0, 2);
    path = current.sample_path(rng);
  }
  current.sample_path = nullptr;

  AdaptiveProposal adapt(u, config.initial_cov, config.initial_scale, config.target_acceptance,
                         config.adaptation_decay);
  Rng chain_rng = Rng::stream(config.seed, 0, 3);

  for (std::size_t i = 1; i <= iters; ++i) {
    const ThetaProposal prop = propose_theta(u, adapt.covariance(), adapt.scale(), chain_rng);
    const double prop_prior = log_theta_prior(prop.theta, prior);
    double alpha = 0.0;
    bool accept = false;
    LikelihoodEstimate candidate;
    if (prop_prior != kNegInf) {
      candidate = estimator(prop.theta, mix_key(config.seed, i, 1));
      ++out.estimator_calls;
      if (candidate.log_likelihood != kNegInf) {
        const double log_r = prop_prior - log_prior + candidate.log_likelihood -
                             current.log_likelihood + prop.log_ratio;
        alpha = log_r >= 0.0 ? 1.0 : std::exp(log_r);
        accept = chain_rng.uniform() < alpha;
      }
    }
    if (accept) {
      u = prop.u;
      theta = prop.theta;
      log_prior = prop_prior;
      if (config.store_paths && candidate.sample_path) {
        Rng rng = Rng::stream(config.seed, i, 2);
        path = candidate.sample_path(rng);
      }
      current.log_likelihood = candidate.log_likelihood;
    }
    adapt.adapt(i, alpha, u);

    out.sigma.push_back(theta.sigma);
    out.rho.push_back(theta.rho);
    out.x0.push_back(theta.x0);
    out.log_lik.push_back(current.log_likelihood);
    out.accepted.push_back(accept ? 1 : 0);
    if (config.store_paths) {
      for (std::size_t n = 0; n < n_days; ++n) {
        out.beta.push_back(n < path.beta.size() ? path.beta[n] : 0.0);
        out.x.push_back(n + 1 < path.x.size() ? path.x[n + 1] : 0);
      }
    }
    if (observer) observer(i, out);
  }
  out.jitter_events = adapt.jitter_events();
  out.final_scale = adapt.scale();
  return out;
}

ChainOutput run_pmmh(const ChainConfig& config, const Problem& problem,
                     const SmcOptions& smc_options, const PriorConfig& prior,
                     const ChainObserver& observer) {
  problem.validate();
  if (problem.n_days() == 0) throw InvalidArgument("no data: both the series and the tree are empty");
  auto shared = std::make_shared<const Problem>(problem);
  return run_pmmh(config, smc_estimator(shared, smc_options), problem.n_days(), prior, observer);
}

}  // namespace epi
