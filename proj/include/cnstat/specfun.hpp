#pragma once

// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x).
// Series below x = a + 1, Lentz continued fraction above; Q is evaluated
// directly in the tail so tiny p-values keep their relative accuracy.

#include <cmath>
#include <limits>

#include "cnstat/errors.hpp"

namespace cnstat {

namespace specfun_detail {

inline constexpr int kMaxIter = 10000;
inline constexpr double kEps = 1e-16;

inline double log_prefactor(double a, double x) { return a * std::log(x) - x - std::lgamma(a); }

inline double p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) return sum * std::exp(log_prefactor(a, x));
  }
  throw PrecisionError("incomplete gamma series did not converge");
}

inline double q_continued_fraction(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kEps;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return std::exp(log_prefactor(a, x)) * h;
  }
  throw PrecisionError("incomplete gamma continued fraction did not converge");
}

}  // namespace specfun_detail

inline double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw DomainError("gamma_p: need a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return specfun_detail::p_series(a, x);
  return 1.0 - specfun_detail::q_continued_fraction(a, x);
}

inline double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw DomainError("gamma_q: need a > 0, x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - specfun_detail::p_series(a, x);
  return specfun_detail::q_continued_fraction(a, x);
}

/// Upper tail of the chi-square distribution with `dof` degrees of freedom.
inline double chi_square_sf(double statistic, int dof) {
  if (dof < 1) throw DomainError("chi_square_sf: dof must be >= 1");
  if (statistic < 0.0) throw DomainError("chi_square_sf: negative statistic");
  return gamma_q(0.5 * dof, 0.5 * statistic);
}

}  // namespace cnstat
