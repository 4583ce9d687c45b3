#include "bessel.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "model.hpp"

namespace epi {
namespace {

constexpr double kTol = 1e-17;
constexpr int kDebyeTerms = 13;

// Polynomials u_k(p) of the uniform expansion, built once from
//   u_{k+1}(p) = p^2 (1 - p^2) u_k'(p) / 2 + (1/8) * int_0^p (1 - 5 t^2) u_k(t) dt.
// Coefficient j of polys[k] multiplies p^j.
const std::vector<std::vector<double>>& debye_polynomials() {
  static const std::vector<std::vector<double>> polys = [] {
    std::vector<std::vector<double>> u(kDebyeTerms);
    u[0] = {1.0};
    for (int k = 0; k + 1 < kDebyeTerms; ++k) {
      const auto& cur = u[k];
      std::vector<double> next(cur.size() + 3, 0.0);
      for (std::size_t j = 1; j < cur.size(); ++j) {
        // p^2 (1 - p^2) * j c_j p^{j-1} / 2
        const double d = 0.5 * static_cast<double>(j) * cur[j];
        next[j + 1] += d;
        next[j + 3] -= d;
      }
      for (std::size_t j = 0; j < cur.size(); ++j) {
        // (1/8) int_0^p (c_j t^j - 5 c_j t^{j+2}) dt
        next[j + 1] += cur[j] / (8.0 * static_cast<double>(j + 1));
        next[j + 3] -= 5.0 * cur[j] / (8.0 * static_cast<double>(j + 3));
      }
      u[k + 1] = std::move(next);
    }
    return u;
  }();
  return polys;
}

double horner(const std::vector<double>& c, double p) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * p + *it;
  return acc;
}

double series_scaled(std::int64_t n, double x) {
  const double nu = static_cast<double>(n);
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  const double peak = 0.5 * x;
  for (std::int64_t m = 0;; ++m) {
    const double md = static_cast<double>(m);
    term *= q / ((md + 1.0) * (md + 1.0 + nu));
    sum += term;
    if (md > peak && term < kTol * sum) break;
  }
  return nu * std::log(0.5 * x) - log_factorial(n) + std::log(sum) - x;
}

double debye_scaled(std::int64_t n, double x) {
  const auto& u = debye_polynomials();
  const double nu = static_cast<double>(n);
  const double z = x / nu;
  const double s = std::hypot(1.0, z);
  const double p = 1.0 / s;
  const double w = 1.0 / (s + z);  // s - z without cancellation
  const double eta_minus_z = w - std::log1p((1.0 + w) / z);

  double sum = 1.0;
  double nu_pow = 1.0;
  for (int k = 1; k < kDebyeTerms; ++k) {
    nu_pow *= nu;
    const double term = horner(u[k], p) / nu_pow;
    sum += term;
    if (std::fabs(term) < kTol * std::fabs(sum)) break;
  }
  return nu * eta_minus_z - 0.5 * std::log(2.0 * std::numbers::pi * nu) - 0.5 * std::log(s) +
         std::log(sum);
}

// Returns NaN when the asymptotic series starts growing before converging.
double hankel_scaled(std::int64_t n, double x) {
  const double mu = 4.0 * static_cast<double>(n) * static_cast<double>(n);
  double term = 1.0;
  double sum = 1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k < 200; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (8.0 * k * x);
    const double mag = std::fabs(term);
    if (mag > prev) return std::numeric_limits<double>::quiet_NaN();
    sum += term;
    if (mag < kTol * std::fabs(sum)) {
      return -0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
    }
    prev = mag;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double recurrence_scaled(std::int64_t n, double x) {
  const std::int64_t top = kBesselDebyeOrder;
  const double log_top = debye_scaled(top, x);
  // ratio_k = I_k / I_{k+1}; backward recurrence is stable for I.
  double ratio = std::exp(log_top - debye_scaled(top + 1, x));
  double product = 1.0;
  int exponent = 0;
  for (std::int64_t k = top; k > n; --k) {
    ratio = 1.0 / ratio + 2.0 * static_cast<double>(k) / x;
    int e = 0;
    product = std::frexp(product * ratio, &e);
    exponent += e;
  }
  return log_top + std::log(product) + exponent * std::numbers::ln2;
}

}  // namespace

double log_bessel_i_scaled(std::int64_t order, double x) {
  const std::int64_t n = order < 0 ? -order : order;
  if (x == 0.0) return n == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (x <= kBesselSeriesLimit) return series_scaled(n, x);
  if (n >= kBesselDebyeOrder) return debye_scaled(n, x);
  if (x > static_cast<double>(n * n)) {
    const double h = hankel_scaled(n, x);
    if (!std::isnan(h)) return h;
  }
  return recurrence_scaled(n, x);
}

double log_bessel_i(std::int64_t order, double x) {
  if (x == 0.0) return log_bessel_i_scaled(order, x);
  return log_bessel_i_scaled(order, x) + x;
}

}  // namespace epi
