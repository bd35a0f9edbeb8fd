#pragma once

// Frobenius traces of E_D: y^2 = x^3 - D^2 x and of the cubic/quartic twist
// families, plus the averages f_X(n) over square-free D <= X.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cnstat/arith.hpp"
#include "cnstat/errors.hpp"

namespace cnstat {

namespace frob_detail {

inline bool is_odd_prime(i64 p) {
  if (p < 3 || p % 2 == 0) return false;
  for (i64 q = 3; q * q <= p; q += 2) {
    if (p % q == 0) return false;
  }
  return true;
}

// chi[r] for r in [0, p): the quadratic character, 0 at 0.
inline std::vector<std::int8_t> character_table(i64 p) {
  std::vector<std::int8_t> chi(static_cast<std::size_t>(p), -1);
  chi[0] = 0;
  for (i64 x = 1; x <= p / 2; ++x) chi[static_cast<std::size_t>(x * x % p)] = 1;
  return chi;
}

}  // namespace frob_detail

/// a_p = -sum_x chi(x^3 + a4 x + a6) for an odd prime p of good reduction.
inline i64 ap_bruteforce(i64 a4, i64 a6, i64 p) {
  if (!frob_detail::is_odd_prime(p)) throw DomainError("ap_bruteforce: p must be an odd prime");
  const i64 disc = mod_floor(4 * mul_mod(mul_mod(a4, a4, p), a4, p) + 27 * mul_mod(a6, a6, p), p);
  if (disc == 0) throw DomainError("ap_bruteforce: bad reduction at p=" + std::to_string(p));
  const auto chi = frob_detail::character_table(p);
  const i64 A = mod_floor(a4, p);
  const i64 B = mod_floor(a6, p);
  i64 sum = 0;
  for (i64 x = 0; x < p; ++x) {
    const i64 fx = (mul_mod(mul_mod(x, x, p) + A, x, p) + B) % p;
    sum += chi[static_cast<std::size_t>(fx)];
  }
  return -sum;
}

/// a_p(E_1) for odd p: 0 when p = 3 mod 4, else 2a with p = a^2 + b^2 normalized.
inline i64 ap_base(i64 p) {
  if (p == 2) throw DomainError("ap_base: p = 2 is a bad prime");
  if (p < 2) throw DomainError("ap_base: p must be prime");
  if (p % 4 == 3) return 0;
  return 2 * two_squares(p).a;
}

/// a_p(E_D) = (D/p) a_p(E_1); zero at p | 2D.
inline i64 ap_twist(i64 D, i64 p) {
  if (p == 2 || D % p == 0) return 0;
  if (p % 4 == 3) return 0;
  return jacobi(D, p) * ap_base(p);
}

struct TraceVector {
  i64 D = 0;
  std::vector<i64> primes;
  std::vector<i64> a;
};

inline TraceVector trace_vector(i64 D, std::size_t k, const PrimeTable& table) {
  if (k < 1) throw DomainError("trace_vector: k must be >= 1");
  TraceVector tv;
  tv.D = D;
  tv.primes.reserve(k);
  tv.a.reserve(k);
  for (std::size_t i = 1; i <= k; ++i) {
    const i64 p = table.nth_prime(i);
    tv.primes.push_back(p);
    tv.a.push_back(ap_twist(D, p));
  }
  return tv;
}

// =============================================================================
// Twist families
// =============================================================================

enum class TwistKind { Quadratic, Cubic, Quartic };

inline const char* to_string(TwistKind k) {
  switch (k) {
    case TwistKind::Quadratic: return "quadratic";
    case TwistKind::Cubic: return "cubic";
    case TwistKind::Quartic: return "quartic";
  }
  return "quadratic";
}

/// Quadratic: y^2 = x^3 - x, twist d -> (-d^2, 0).
/// Cubic:     y^2 = x^3 - 1, twist d -> (0, -d^2).
/// Quartic:   y^2 = x^3 - 2x, twist d -> (-2d, 0).
struct TwistFamilySpec {
  TwistKind kind = TwistKind::Quadratic;
  i64 a4 = -1;
  i64 a6 = 0;

  static TwistFamilySpec quadratic() { return {TwistKind::Quadratic, -1, 0}; }
  static TwistFamilySpec cubic() { return {TwistKind::Cubic, 0, -1}; }
  static TwistFamilySpec quartic() { return {TwistKind::Quartic, -2, 0}; }

  std::pair<i64, i64> twist(i64 d) const {
    switch (kind) {
      case TwistKind::Quadratic: return {a4 * d * d, 0};
      case TwistKind::Cubic: return {0, a6 * d * d};
      case TwistKind::Quartic: return {a4 * d, 0};
    }
    return {a4, a6};
  }
};

inline TwistFamilySpec twist_family(const std::string& name) {
  if (name == "quadratic") return TwistFamilySpec::quadratic();
  if (name == "cubic") return TwistFamilySpec::cubic();
  if (name == "quartic") return TwistFamilySpec::quartic();
  throw DomainError("unknown twist family '" + name + "'");
}

/// Trace of the twist by d at p, 0 where the twist has bad reduction.
/// Only d mod p matters, so callers may cache by residue.
inline i64 ap_family(const TwistFamilySpec& fam, i64 d, i64 p) {
  if (fam.kind == TwistKind::Quadratic) return ap_twist(d, p);
  if (p == 2 || p == 3 || d % p == 0) return 0;
  const auto [a4, a6] = fam.twist(mod_floor(d, p));
  return ap_bruteforce(a4, a6, p);
}

using DFilter = std::function<bool(i64)>;

namespace frob_detail {

// Per-residue trace table for one prime; entries for every d mod p.
inline std::vector<i64> residue_traces(const TwistFamilySpec& fam, i64 p) {
  std::vector<i64> out(static_cast<std::size_t>(p), 0);
  if (p == 2) return out;
  for (i64 r = 0; r < p; ++r) out[static_cast<std::size_t>(r)] = ap_family(fam, r, p);
  return out;
}

}  // namespace frob_detail

/// f_X(n) = (1/#SF(X)) sum_{D in SF(X)} a_{p_n}(E_D), restricted to D passing
/// `filter` when one is given (the mean is then over the filtered set).
inline double frob_average(std::size_t n, i64 X, const TwistFamilySpec& fam, const PrimeTable& table,
                           const DFilter& filter = {}) {
  const i64 p = table.nth_prime(n);
  const auto sf = enumerate_squarefree(X, table);
  if (fam.kind == TwistKind::Quadratic && !filter) {
    if (sf.empty()) throw UndefinedAverageError("frob_average: SF(X) is empty");
    if (p == 2 || p % 4 == 3) return 0.0;
    i64 sym = 0;
    for (i64 D : sf) sym += jacobi(D, p);
    return static_cast<double>(ap_base(p) * sym) / static_cast<double>(sf.size());
  }
  const auto tr = frob_detail::residue_traces(fam, p);
  i64 sum = 0;
  i64 count = 0;
  for (i64 D : sf) {
    if (filter && !filter(D)) continue;
    sum += tr[static_cast<std::size_t>(D % p)];
    ++count;
  }
  if (count == 0) throw UndefinedAverageError("frob_average: filtered set is empty");
  return static_cast<double>(sum) / static_cast<double>(count);
}

struct DecayPoint {
  i64 X;
  double value;
};

/// f_X(n) at each X of an increasing grid, in one pass over SF(max X).
inline std::vector<DecayPoint> frob_decay_curve(std::size_t n, const std::vector<i64>& grid,
                                                const TwistFamilySpec& fam, const PrimeTable& table) {
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) throw DomainError("frob_decay_curve: grid must be increasing");
  }
  std::vector<DecayPoint> out;
  if (grid.empty()) return out;
  const i64 p = table.nth_prime(n);
  const auto tr = frob_detail::residue_traces(fam, p);
  const auto sf = enumerate_squarefree(grid.back(), table);
  i64 sum = 0;
  std::size_t idx = 0;
  for (i64 X : grid) {
    while (idx < sf.size() && sf[idx] <= X) sum += tr[static_cast<std::size_t>(sf[idx++] % p)];
    if (idx == 0) throw UndefinedAverageError("frob_decay_curve: SF(X) is empty at X=" + std::to_string(X));
    out.push_back({X, static_cast<double>(sum) / static_cast<double>(idx)});
  }
  return out;
}

/// sum_{k <= n} (k/p)
inline i64 legendre_partial_sum(i64 p, i64 n) {
  if (n < 0) throw DomainError("legendre_partial_sum: n must be >= 0");
  i64 s = 0;
  for (i64 k = 1; k <= n; ++k) s += jacobi(k, p);
  return s;
}

/// C_n(p) = (1/n) sum_{k <= n} (k/p)
inline double legendre_running_average(i64 p, i64 n) {
  if (n < 1) throw DomainError("legendre_running_average: n must be >= 1");
  return static_cast<double>(legendre_partial_sum(p, n)) / static_cast<double>(n);
}

/// C_1(p), ..., C_n(p) in one pass.
inline std::vector<double> legendre_running_series(i64 p, i64 n) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max<i64>(n, 0)));
  i64 s = 0;
  for (i64 k = 1; k <= n; ++k) {
    s += jacobi(k, p);
    out.push_back(static_cast<double>(s) / static_cast<double>(k));
  }
  return out;
}

inline constexpr int kResidueClasses[6] = {1, 2, 3, 5, 6, 7};

struct ClassAverageRow {
  i64 prime;
  int residue;  // D mod 8
  double value;
};

/// Mean a_p(E_D) over square-free D <= X in each class mod 8, for each given
/// prime; divided by 2 sqrt(p) when `normalize`. Classes with no D are omitted.
inline std::vector<ClassAverageRow> class_averages(i64 X, const std::vector<i64>& primes, bool normalize,
                                                   const PrimeTable& table) {
  const auto sf = enumerate_squarefree(X, table);
  std::vector<ClassAverageRow> out;
  out.reserve(primes.size() * 6);
  std::array<i64, 8> size{};
  for (i64 D : sf) ++size[static_cast<std::size_t>(D % 8)];
  for (i64 p : primes) {
    std::array<i64, 8> sym{};
    const i64 base = (p == 2 || p % 4 == 3) ? 0 : ap_base(p);
    if (base != 0) {
      std::vector<std::int8_t> leg(static_cast<std::size_t>(p));
      for (i64 r = 0; r < p; ++r) leg[static_cast<std::size_t>(r)] = static_cast<std::int8_t>(jacobi(r, p));
      for (i64 D : sf) sym[static_cast<std::size_t>(D % 8)] += leg[static_cast<std::size_t>(D % p)];
    }
    for (int h : kResidueClasses) {
      const auto cls = static_cast<std::size_t>(h);
      if (size[cls] == 0) continue;
      double v = static_cast<double>(base * sym[cls]) / static_cast<double>(size[cls]);
      if (normalize) v /= 2.0 * std::sqrt(static_cast<double>(p));
      out.push_back({p, h, v});
    }
  }
  return out;
}

}  // namespace cnstat
