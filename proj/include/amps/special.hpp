#pragma once

namespace amps::special {

/// Natural log of the gamma function for x > 0.
double log_gamma(double x);

/// Digamma function psi(x) = d/dx log_gamma(x), x > 0.
double digamma(double x);

/// log(sum(exp(values))) computed stably.
template <typename Range>
double log_sum_exp(const Range& values);

}  // namespace amps::special

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>

namespace amps::special {

template <typename Range>
double log_sum_exp(const Range& values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

}  // namespace amps::special
