#pragma once

/**
 * @file lfunction.hpp
 * @brief Real period, L(1, E_D), Tamagawa numbers and the normalized BSD
 *        quantity 16 L(1) / (Omega prod c_p).
 *
 * L(1) uses the rapidly convergent series
 *
 *   L(1) = sum a_n/n (exp(-2 pi n / (A sqrt N)) + w exp(-2 pi n A / sqrt N))
 *
 * valid for every A > 0. Evaluating it at two values of A determines the
 * root number w numerically; L(1) is then (1 + w) F(1). The numeric w is
 * checked against the residue of D mod 8.
 */

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "cnstat/arith.hpp"
#include "cnstat/errors.hpp"
#include "cnstat/frobenius.hpp"

namespace cnstat {

/// Omega = 2 pi / AGM(sqrt(2D), sqrt(D)), counting both real components.
inline double real_period(double D) {
  if (!(D > 0.0)) throw DomainError("real_period: D must be positive");
  double a = std::sqrt(2.0 * D);
  double b = std::sqrt(D);
  for (int i = 0; i < 64 && std::abs(a - b) > 1e-16 * a; ++i) {
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
  }
  return 2.0 * std::numbers::pi / a;
}

/// 32 D^2 for odd D, 16 D^2 for even D.
inline double conductor(i64 D) {
  const double d = static_cast<double>(D);
  return (D % 2 == 0 ? 16.0 : 32.0) * d * d;
}

/// Coefficients a_1..a_M of L(E_D, s); a_n = 0 whenever gcd(n, 2D) > 1.
inline std::vector<double> dirichlet_coefficients(i64 D, std::size_t M) {
  std::vector<double> a(M + 1, 0.0);
  if (M == 0) return a;
  a[1] = 1.0;
  if (M < 2) return a;
  const PrimeTable table(static_cast<std::uint32_t>(std::max<std::size_t>(M, 2)));
  for (std::size_t n = 2; n <= M; ++n) {
    const std::uint32_t p = table.spf(static_cast<std::uint32_t>(n));
    std::size_t m = n;
    std::size_t pk = 1;
    int k = 0;
    while (m % p == 0) {
      m /= p;
      pk *= p;
      ++k;
    }
    if (m > 1) {
      a[n] = a[pk] * a[m];
      continue;
    }
    // n = p^k
    if (p == 2 || D % p == 0) {
      a[n] = 0.0;
    } else if (k == 1) {
      a[n] = static_cast<double>(ap_twist(D, p));
    } else {
      a[n] = a[p] * a[pk / p] - static_cast<double>(p) * a[pk / p / p];
    }
  }
  return a;
}

struct LValue {
  double value = 0.0;
  int root_number = 1;
  double root_number_numeric = 1.0;
  std::size_t terms = 0;
};

inline constexpr double kMinLTolerance = 1e-13;

namespace lfun_detail {

// Smallest M with 2 * sum_{n>M} 2 n^{-1/2} e^{-c n} * 4 < tol.
inline std::size_t cutoff(double c, double tol) {
  std::size_t M = 16;
  while (true) {
    const double m = static_cast<double>(M);
    const double tail = 16.0 / std::sqrt(m) * std::exp(-c * (m + 1.0)) / (1.0 - std::exp(-c));
    if (tail < tol) return M;
    M = M + M / 4 + 1;
  }
}

inline double scaled_sum(const std::vector<double>& a, double rate) {
  double s = 0.0;
  for (std::size_t n = a.size() - 1; n >= 1; --n) {
    const double nn = static_cast<double>(n);
    if (a[n] != 0.0) s += a[n] / nn * std::exp(-rate * nn);
  }
  return s;
}

}  // namespace lfun_detail

/// Root number of E_D: -1 exactly when D = 5, 6, 7 mod 8.
inline int root_number_rule(i64 D) {
  const i64 r = D % 8;
  return (r == 5 || r == 6 || r == 7) ? -1 : 1;
}

inline LValue l_value_at_1(i64 D, double tol = 1e-10) {
  if (D < 1) throw DomainError("l_value_at_1: D must be positive");
  if (!(tol >= kMinLTolerance)) {
    throw ConfigurationError("l_value_at_1: tolerance below the double-precision budget");
  }
  constexpr double A1 = 1.1;
  constexpr double A2 = 1.25;
  const double sqrtN = std::sqrt(conductor(D));
  const double two_pi = 2.0 * std::numbers::pi;
  const std::size_t M = lfun_detail::cutoff(two_pi / (A2 * sqrtN), tol);
  const auto a = dirichlet_coefficients(D, M);

  auto F = [&](double A) { return lfun_detail::scaled_sum(a, two_pi / (A * sqrtN)); };
  const double f1 = F(1.0);
  const double fa1 = F(A1);
  const double fa2 = F(A2);
  const double fi1 = F(1.0 / A1);
  const double fi2 = F(1.0 / A2);
  const double den = fi2 - fi1;

  LValue out;
  out.terms = M;
  out.root_number = root_number_rule(D);
  if (std::abs(den) > 1e3 * tol) {
    out.root_number_numeric = (fa1 - fa2) / den;
    const int w = out.root_number_numeric > 0 ? 1 : -1;
    if (std::abs(out.root_number_numeric - w) > 1e-3) {
      throw PrecisionError("l_value_at_1: root number not resolved for D=" + std::to_string(D));
    }
    if (w != out.root_number) {
      throw ConsistencyError("l_value_at_1: numeric root number disagrees with D mod 8 for D=" +
                             std::to_string(D));
    }
  } else {
    out.root_number_numeric = std::numeric_limits<double>::quiet_NaN();
  }
  out.value = (1.0 + out.root_number) * f1;
  return out;
}

// =============================================================================
// Tate's algorithm
// =============================================================================

enum class Kodaira { I0, In, II, III, IV, I0s, Ins, IVs, IIIs, IIs };

inline std::string kodaira_symbol(Kodaira k, int n) {
  switch (k) {
    case Kodaira::I0: return "I0";
    case Kodaira::In: return "I" + std::to_string(n);
    case Kodaira::II: return "II";
    case Kodaira::III: return "III";
    case Kodaira::IV: return "IV";
    case Kodaira::I0s: return "I0*";
    case Kodaira::Ins: return "I" + std::to_string(n) + "*";
    case Kodaira::IVs: return "IV*";
    case Kodaira::IIIs: return "III*";
    case Kodaira::IIs: return "II*";
  }
  return "?";
}

struct LocalReduction {
  i64 p = 0;
  Kodaira type = Kodaira::I0;
  int n = 0;           // subscript for I_n and I_n*
  int c = 1;           // Tamagawa number
  int min_disc_val = 0;
  int model_changes = 0;  // times the model was divided by p (non-minimal input)
};

namespace tate_detail {

using Big = boost::multiprecision::cpp_int;

struct Model {
  Big a1, a2, a3, a4, a6;

  void transform(const Big& r, const Big& s, const Big& t) {
    const Big n1 = a1 + 2 * s;
    const Big n2 = a2 - s * a1 + 3 * r - s * s;
    const Big n3 = a3 + r * a1 + 2 * t;
    const Big n4 = a4 - s * a3 + 2 * r * a2 - (t + r * s) * a1 + 3 * r * r - 2 * s * t;
    const Big n6 = a6 + r * a4 + r * r * a2 + r * r * r - t * a3 - t * t - r * t * a1;
    a1 = n1;
    a2 = n2;
    a3 = n3;
    a4 = n4;
    a6 = n6;
  }
  Big b2() const { return a1 * a1 + 4 * a2; }
  Big b4() const { return 2 * a4 + a1 * a3; }
  Big b6() const { return a3 * a3 + 4 * a6; }
  Big b8() const { return a1 * a1 * a6 + 4 * a2 * a6 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4; }
  Big c4() const { return b2() * b2() - 24 * b4(); }
  Big c6() const { return -b2() * b2() * b2() + 36 * b2() * b4() - 216 * b6(); }
  Big disc() const {
    const Big B2 = b2(), B4 = b4(), B6 = b6(), B8 = b8();
    return -B2 * B2 * B8 - 8 * B4 * B4 * B4 - 27 * B6 * B6 + 9 * B2 * B4 * B6;
  }
};

inline int val(const Big& x, i64 p) {
  if (x == 0) return 1 << 20;
  Big y = boost::multiprecision::abs(x);
  int v = 0;
  while (y % p == 0) {
    y /= p;
    ++v;
  }
  return v;
}

inline bool divides(const Big& pk, const Big& x) { return x % pk == 0; }

inline i64 mod(const Big& x, i64 p) {
  Big r = x % p;
  if (r < 0) r += p;
  return static_cast<i64>(r);
}

inline i64 inv_mod(i64 a, i64 p) { return pow_mod(mod_floor(a, p), static_cast<u64>(p - 2), p); }

inline Big pw(i64 p, int e) {
  Big r = 1;
  for (int i = 0; i < e; ++i) r *= p;
  return r;
}

// Number of roots in F_p of a T^2 + b T + c (a, b, c reduced mod p).
inline int quad_roots(i64 a, i64 b, i64 c, i64 p) {
  int n = 0;
  for (i64 t = 0; t < p; ++t) {
    if (mod_floor(mul_mod(mul_mod(a, t, p) + b, t, p) + c, p) == 0) ++n;
  }
  return n;
}

inline int cubic_roots(i64 b, i64 c, i64 d, i64 p) {
  int n = 0;
  for (i64 t = 0; t < p; ++t) {
    const i64 v = mod_floor(mul_mod(mul_mod(t + b, t, p) + c, t, p) + d, p);
    if (v == 0) ++n;
  }
  return n;
}

}  // namespace tate_detail

/// Tate's algorithm at p for an integral Weierstrass model [a1, a2, a3, a4, a6].
inline LocalReduction tate(i64 a1, i64 a2, i64 a3, i64 a4, i64 a6, i64 p) {
  using namespace tate_detail;
  Model E{a1, a2, a3, a4, a6};
  LocalReduction out;
  out.p = p;
  Big D = E.disc();
  if (D == 0) throw DomainError("tate: singular model");
  while (true) {
    const int n = val(D, p);
    out.min_disc_val = n;
    if (n == 0) {
      out.type = Kodaira::I0;
      out.c = 1;
      return out;
    }
    // Move the singular point to (0, 0).
    i64 r = 0;
    i64 t = 0;
    if (p == 2) {
      if (mod(E.b2(), 2) == 0) {
        r = mod(E.a4, 2);
        t = mod(r * (1 + E.a2 + E.a4) + E.a6, 2);
      } else {
        r = mod(E.a3, 2);
        t = mod(r + E.a4, 2);
      }
    } else if (p == 3) {
      r = mod(E.b2(), 3) == 0 ? mod(-E.b6(), 3) : mod(-E.b2() * E.b4(), 3);
      t = mod(E.a1 * r + E.a3, 3);
    } else {
      const Big c4 = E.c4();
      if (mod(c4, p) == 0) {
        r = mod(-Big(inv_mod(12, p)) * E.b2(), p);
      } else {
        r = mod(-Big(inv_mod(mod(12 * c4, p), p)) * (E.c6() + E.b2() * c4), p);
      }
      t = mod(-Big(inv_mod(2, p)) * (E.a1 * r + E.a3), p);
    }
    E.transform(r, 0, t);

    if (mod(E.c4(), p) != 0) {
      out.type = Kodaira::In;
      out.n = n;
      if (quad_roots(1, mod(E.a1, p), mod(-E.a2, p), p) > 0) {
        out.c = n;
      } else {
        out.c = n % 2 == 0 ? 2 : 1;
      }
      return out;
    }
    const Big p2 = pw(p, 2), p3 = pw(p, 3), p4 = pw(p, 4), p6 = pw(p, 6);
    if (!divides(p2, E.a6)) {
      out.type = Kodaira::II;
      out.c = 1;
      return out;
    }
    if (!divides(p3, E.b8())) {
      out.type = Kodaira::III;
      out.c = 2;
      return out;
    }
    if (!divides(p3, E.b6())) {
      out.type = Kodaira::IV;
      out.c = quad_roots(1, mod(E.a3 / p, p), mod(-E.a6 / p2, p), p) > 0 ? 3 : 1;
      return out;
    }
    // Make p | a1, a2; p^2 | a3, a4; p^3 | a6.
    i64 s = 0;
    if (p == 2) {
      s = mod(E.a2, 2);
      t = 2 * mod(E.a6 / 4, 2);
    } else {
      s = mod(-E.a1 * inv_mod(2, p), p);
      t = mod(-E.a3 * inv_mod(2, p), p);
    }
    E.transform(0, s, Big(t));

    const Big b = E.a2 / p;
    const Big c = E.a4 / p2;
    const Big d = E.a6 / p3;
    const Big w = 27 * d * d - b * b * c * c + 4 * b * b * b * d - 18 * b * c * d + 4 * c * c * c;
    const Big x = 3 * c - b * b;
    if (mod(w, p) != 0) {
      out.type = Kodaira::I0s;
      out.c = 1 + cubic_roots(mod(b, p), mod(c, p), mod(d, p), p);
      return out;
    }
    if (mod(x, p) != 0) {
      // Double root; translate it to 0 and peel off powers of p.
      i64 rr = 0;
      if (p == 2) {
        rr = mod(c, 2);
      } else if (p == 3) {
        rr = mod(b * c, 3);
      } else {
        rr = mod((b * c - 9 * d) * inv_mod(mod(2 * x, p), p), p);
      }
      E.transform(Big(p) * rr, 0, 0);
      int m = 1;
      Big mx = p2;
      Big my = p2;
      int cc = 0;
      while (cc == 0) {
        Big xa2 = E.a2 / p;
        Big xa3 = E.a3 / my;
        Big xa4 = E.a4 / (p * mx);
        Big xa6 = E.a6 / (mx * my);
        if (mod(xa3 * xa3 + 4 * xa6, p) != 0) {
          cc = quad_roots(1, mod(xa3, p), mod(-xa6, p), p) > 0 ? 4 : 2;
          break;
        }
        Big tt = p == 2 ? Big(my * xa6) : Big(my * mod(-xa3 * inv_mod(2, p), p));
        E.transform(0, 0, tt);
        my *= p;
        ++m;
        xa2 = E.a2 / p;
        xa3 = E.a3 / my;
        xa4 = E.a4 / (p * mx);
        xa6 = E.a6 / (mx * my);
        if (mod(xa4 * xa4 - 4 * xa2 * xa6, p) != 0) {
          cc = quad_roots(mod(xa2, p), mod(xa4, p), mod(xa6, p), p) > 0 ? 4 : 2;
          break;
        }
        Big rr2 = p == 2 ? Big(mx * mod(xa6 * xa2, 2))
                         : Big(mx * mod(-xa4 * inv_mod(mod(2 * xa2, p), p), p));
        E.transform(rr2, 0, 0);
        mx *= p;
        ++m;
      }
      out.type = Kodaira::Ins;
      out.n = m;
      out.c = cc;
      return out;
    }
    // Triple root.
    i64 rr = 0;
    if (p == 2) {
      rr = mod(b, 2);
    } else if (p == 3) {
      rr = mod(-d, 3);
    } else {
      rr = mod(-b * inv_mod(3, p), p);
    }
    E.transform(Big(p) * rr, 0, 0);
    const Big x3 = E.a3 / p2;
    const Big x6 = E.a6 / p4;
    if (mod(x3 * x3 + 4 * x6, p) != 0) {
      out.type = Kodaira::IVs;
      out.c = quad_roots(1, mod(x3, p), mod(-x6, p), p) > 0 ? 3 : 1;
      return out;
    }
    const i64 tt = p == 2 ? mod(x6, 2) : mod(x3 * inv_mod(2, p), p);
    E.transform(0, 0, -p2 * tt);
    if (!divides(p4, E.a4)) {
      out.type = Kodaira::IIIs;
      out.c = 2;
      return out;
    }
    if (!divides(p6, E.a6)) {
      out.type = Kodaira::IIs;
      out.c = 1;
      return out;
    }
    // Non-minimal: divide by p (u = p).
    E.a1 /= p;
    E.a2 /= p2;
    E.a3 /= p3;
    E.a4 /= p4;
    E.a6 /= p6;
    D = E.disc();
    ++out.model_changes;
  }
}

/// c_p of y^2 = x^3 - D^2 x at a prime p | 2D.
inline LocalReduction local_reduction(i64 D, i64 p) {
  if (p != 2 && D % p != 0) throw DomainError("tamagawa: p must divide 2D");
  return tate(0, 0, 0, -D * D, 0, p);
}

inline int tamagawa(i64 D, i64 p) { return local_reduction(D, p).c; }

inline i64 tamagawa_product(i64 D, const PrimeTable& table) {
  i64 prod = tamagawa(D, 2);
  for (const auto& f : factor(D, table).factors) {
    if (f.prime != 2) prod *= tamagawa(D, f.prime);
  }
  return prod;
}

// =============================================================================
// Normalized BSD quantity
// =============================================================================

inline constexpr double kRoundingTolerance = 1e-3;

struct BSDParams {
  i64 D = 0;
  double omega = 0.0;
  double l1 = 0.0;
  i64 tamagawa = 1;
  int torsion_sq = 16;
  double normalized = 0.0;
  i64 rounded = 0;
  bool l_bsd_odd = false;
  double analytic_sha_like = 0.0;
  std::optional<bool> smith_holds;  // set when s(D) is supplied
};

/// Computes 16 L(1) / (Omega prod c_p), escalating the series tolerance
/// until the value is within 1e-3 of an integer; raises PrecisionError
/// otherwise. When `s` is given, smith_holds = (rounded odd) == (s == 0).
inline BSDParams normalized_bsd(i64 D, const PrimeTable& table, std::optional<int> s = std::nullopt,
                                double tol = 1e-9) {
  BSDParams out;
  out.D = D;
  out.omega = real_period(static_cast<double>(D));
  out.tamagawa = tamagawa_product(D, table);
  for (int attempt = 0;; ++attempt) {
    out.l1 = l_value_at_1(D, tol).value;
    out.normalized = 16.0 * out.l1 / (out.omega * static_cast<double>(out.tamagawa));
    const double r = std::round(out.normalized);
    if (std::abs(out.normalized - r) < kRoundingTolerance) {
      out.rounded = static_cast<i64>(r);
      break;
    }
    if (attempt == 2 || tol / 100.0 < kMinLTolerance) {
      throw PrecisionError("normalized_bsd: D=" + std::to_string(D) + " gives " +
                           std::to_string(out.normalized) + ", not within 1e-3 of an integer");
    }
    tol /= 100.0;
  }
  out.l_bsd_odd = out.rounded % 2 != 0;
  out.analytic_sha_like = out.normalized;
  if (s) out.smith_holds = out.l_bsd_odd == (*s == 0);
  return out;
}

}  // namespace cnstat
