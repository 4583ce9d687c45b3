#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "model.hpp"
#include "rng.hpp"
#include "smc.hpp"

namespace epi {

/// Unconstrained coordinates u = (log sigma, logit rho, log v) where the
/// initial prevalence is x0 = max(1, round(v)).
using ThetaU = Eigen::Vector3d;

ThetaU to_unconstrained(const Theta& theta);
Theta from_unconstrained(const ThetaU& u);

/// log |d theta / d u| at u, with the x0 coordinate corrected for the
/// width of the rounding cell that maps onto round(v). Targets written in
/// u-space as pi(theta(u)) * exp(log_jacobian(u)) have pi as their
/// marginal over theta.
double log_jacobian(const ThetaU& u);

struct ThetaProposal {
  ThetaU u;
  Theta theta;
  /// log q(current | proposal) / q(proposal | current), Jacobians included.
  double log_ratio = 0.0;
};

/// Gaussian random walk in u-space with covariance scale^2 * cov.
ThetaProposal propose_theta(const ThetaU& current, const Eigen::Matrix3d& cov, double scale,
                            Rng& rng);

/// Adaptive scaling within adaptive Metropolis: a Robbins-Monro update of the
/// log scale towards the target acceptance plus a running covariance of the
/// chain states.
class AdaptiveProposal {
 public:
  AdaptiveProposal(const ThetaU& start, const Eigen::Matrix3d& initial_cov, double initial_scale,
                   double target_acceptance, double decay, double prior_weight = 100.0);

  double scale() const { return std::exp(log_scale_); }
  const Eigen::Matrix3d& covariance() const { return cov_; }
  std::size_t jitter_events() const { return jitter_events_; }

  /// iteration >= 1; alpha is the acceptance probability of that iteration
  /// and state the chain's state after it.
  void adapt(std::size_t iteration, double alpha, const ThetaU& state);

 private:
  double log_scale_;
  double target_;
  double decay_;
  double prior_weight_;
  ThetaU mean_;
  Eigen::Matrix3d cov_;
  std::size_t jitter_events_ = 0;
};

/// A likelihood estimate together with a way to draw a latent path from the
/// corresponding posterior approximation.
struct LikelihoodEstimate {
  double log_likelihood = kNegInf;
  std::function<LatentPath(Rng&)> sample_path;  // empty when no paths are available
};

using LikelihoodEstimator = std::function<LikelihoodEstimate(const Theta&, std::uint64_t seed)>;

/// Particle filter with backward simulation.
LikelihoodEstimator smc_estimator(std::shared_ptr<const Problem> problem, SmcOptions options);

struct ChainConfig {
  std::size_t iterations = 1000;
  Theta init_theta{0.05, 0.03, 1};
  double target_acceptance = 0.10;
  double adaptation_decay = 0.66;
  double initial_scale = 1.0;
  Eigen::Matrix3d initial_cov = Eigen::Matrix3d::Identity() * 0.04;
  std::uint64_t seed = 1;
  bool store_paths = true;

  void validate() const;
};

struct ChainOutput {
  std::vector<double> sigma, rho;
  std::vector<std::int64_t> x0;
  std::vector<double> log_lik;
  std::vector<char> accepted;
  std::size_t n_days = 0;
  std::vector<double> beta;      // row-major iterations x n_days
  std::vector<std::int64_t> x;   // row-major iterations x n_days, days 1..N
  std::size_t estimator_calls = 0;
  std::size_t jitter_events = 0;
  double final_scale = 0.0;

  std::size_t size() const { return sigma.size(); }
  double beta_at(std::size_t i, std::size_t day) const { return beta[i * n_days + day - 1]; }
  std::int64_t x_at(std::size_t i, std::size_t day) const { return x[i * n_days + day - 1]; }
  double acceptance_rate(std::size_t from = 0) const;
};

/// Called after every iteration with (iteration, output so far).
using ChainObserver = std::function<void(std::size_t, const ChainOutput&)>;

/// Pseudo-marginal Metropolis-Hastings over theta. A rejected iteration keeps
/// the stored estimate and never calls the estimator again for it. Throws
/// DegenerateError when the estimate at the initial theta is -inf.
ChainOutput run_pmmh(const ChainConfig& config, const LikelihoodEstimator& estimator,
                     std::size_t n_days, const PriorConfig& prior,
                     const ChainObserver& observer = {});

/// Convenience overload using the particle filter on `problem`.
ChainOutput run_pmmh(const ChainConfig& config, const Problem& problem,
                     const SmcOptions& smc_options, const PriorConfig& prior,
                     const ChainObserver& observer = {});

}  // namespace epi
