#pragma once

#include <cstdint>

namespace epi {

/// log(I_n(x)) - x for integer order n >= 0 and x >= 0, where I_n is the
/// modified Bessel function of the first kind.
///
/// Finite for every finite input with x > 0, including orders and arguments
/// far beyond the overflow range of I_n itself. Three regimes:
///  - x <= kBesselSeriesLimit: power series summed relative to its first term;
///  - order >= kBesselDebyeOrder: uniform asymptotic (Debye) expansion;
///  - small order, large x: Hankel expansion when it converges, otherwise
///    Debye values at kBesselDebyeOrder carried down by the (stable)
///    backward three-term recurrence.
double log_bessel_i_scaled(std::int64_t order, double x);

/// log(I_n(x)); -inf for x == 0 and n > 0.
double log_bessel_i(std::int64_t order, double x);

inline constexpr double kBesselSeriesLimit = 30.0;
inline constexpr std::int64_t kBesselDebyeOrder = 20;

}  // namespace epi
