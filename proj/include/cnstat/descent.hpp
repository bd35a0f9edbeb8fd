#pragma once

/**
 * @file descent.hpp
 * @brief 2-Selmer ranks of E_D: y^2 = x^3 - D^2 x.
 *
 * s(D) = dim Sel_2(E_D/Q) - 2 is computed two ways:
 *
 *  - selmer_rank_oracle: complete 2-descent. Every pair (b1, b2) of
 *    square-free integers supported on {-1} and the primes of 2D is tested for
 *    real and p-adic solvability of its torsor. The passing set is checked to
 *    be a group containing the torsion images before its dimension is taken.
 *  - monsky_rank: 2t - rank of Monsky's 2t x 2t matrix over F_2 built from
 *    Legendre symbols of the t odd primes of D.
 *
 * The root ordering is e = (-D, 0, D) with descent map P -> (x + D, x).
 */

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cnstat/arith.hpp"
#include "cnstat/errors.hpp"
#include "cnstat/gf2.hpp"
#include "cnstat/local.hpp"

namespace cnstat {

struct SelmerPair {
  i64 b1;
  i64 b2;
  auto operator<=>(const SelmerPair&) const = default;
};

enum class SelmerMethod { Oracle, Matrix };

inline const char* to_string(SelmerMethod m) { return m == SelmerMethod::Oracle ? "oracle" : "matrix"; }

struct SelmerGroup {
  i64 D = 0;
  std::vector<SelmerPair> elements;  // enumeration order (lexicographic on exponent masks)
  std::vector<SelmerPair> basis;     // empty for the matrix path
  int dim = 0;
  int s = 0;
  SelmerMethod method = SelmerMethod::Oracle;
};

/// Generators of Q(S, 2) for S = {inf, 2} U {p | D}: [-1, 2, p_1, ..., p_t].
inline std::vector<i64> selmer_support(i64 D, const PrimeTable& table) {
  if (D < 1) throw DomainError("selmer_support: D must be positive");
  const Factorization f = factor(D, table);
  if (!f.squarefree()) throw DomainError("selmer_support: D=" + std::to_string(D) + " is not square-free");
  std::vector<i64> gens = {-1, 2};
  for (const auto& pp : f.factors) {
    if (pp.prime != 2) gens.push_back(pp.prime);
  }
  return gens;
}

/// The four images of E_D(Q)[2] under (x + D, x), reduced to square-free form.
inline std::array<SelmerPair, 4> torsion_images(i64 D) {
  // O, (-D, 0), (0, 0), (D, 0)
  return {SelmerPair{1, 1}, SelmerPair{2, -D}, SelmerPair{D, -1}, SelmerPair{2 * D, D}};
}

/// s(D) parity predicted by the residue of D mod 8: 0 for 1, 2, 3; 1 for 5, 6, 7.
inline int expected_parity(i64 D) {
  const i64 r = D % 8;
  return (r == 5 || r == 6 || r == 7) ? 1 : 0;
}

struct OracleOptions {
  int max_omega = 7;   // bound on omega(2D)
  int depth_bump = 0;  // added to the default p-adic depth at every prime
  LocalMethod method = LocalMethod::LineSearch;
};

namespace descent_detail {

using Mask = std::uint32_t;

inline i64 mask_value(Mask m, const std::vector<i64>& gens) {
  i64 v = 1;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    if (m & (Mask{1} << i)) v *= gens[i];
  }
  return v;
}

// Removes square factors of b over the support primes.
inline i64 reduce_mod_squares(i64 b, const std::vector<i64>& gens) {
  for (std::size_t i = 1; i < gens.size(); ++i) {
    const i64 q = gens[i] * gens[i];
    while (b % q == 0) b /= q;
  }
  return b;
}

inline Mask value_mask(i64 b, const std::vector<i64>& gens) {
  Mask m = 0;
  if (b < 0) {
    m |= 1;
    b = -b;
  }
  for (std::size_t i = 1; i < gens.size(); ++i) {
    if (b % gens[i] == 0) {
      m |= Mask{1} << i;
      b /= gens[i];
    }
  }
  if (b != 1) throw DomainError("value not supported on the Selmer generators");
  return m;
}

// Square class in Q_p^*/Q_p^*2 as a bit vector: bit0 = v_p mod 2, then
// bit1 = (u/p) = -1 for odd p; bit1 = u = 3 mod 4, bit2 = u = +-3 mod 8 for p = 2.
inline std::uint32_t local_class(i64 g, i64 p) {
  std::uint32_t bits = 0;
  i64 u = g;
  if (u % p == 0) {
    bits |= 1;
    u /= p;
  }
  if (p == 2) {
    const i64 r = mod_floor(u, 8);
    if (r == 3 || r == 7) bits |= 2;
    if (r == 3 || r == 5) bits |= 4;
  } else if (jacobi(u, p) == -1) {
    bits |= 2;
  }
  return bits;
}

}  // namespace descent_detail

/// Complete 2-descent. Throws CapacityError when omega(2D) > opts.max_omega.
inline SelmerGroup selmer_rank_oracle(i64 D, const PrimeTable& table, const OracleOptions& opts = {}) {
  using descent_detail::Mask;
  const std::vector<i64> gens = selmer_support(D, table);
  const int n = static_cast<int>(gens.size());
  if (n - 1 > opts.max_omega) {
    throw CapacityError("selmer_rank_oracle: omega(2D) = " + std::to_string(n - 1) +
                        " exceeds bound " + std::to_string(opts.max_omega));
  }
  const Mask full = Mask{1} << n;

  std::vector<i64> bad = {2};
  for (std::size_t i = 2; i < gens.size(); ++i) bad.push_back(gens[i]);

  // Per bad prime: square class of every mask, and a lazily filled table of
  // local solvability indexed by the pair of classes. Solvability over Q_p only
  // depends on (b1, b2) modulo Q_p^*2.
  struct PrimeData {
    i64 p;
    int class_bits;
    int depth;
    std::vector<std::uint32_t> mask_class;
    std::vector<std::int8_t> verdict;
  };
  std::vector<PrimeData> primes;
  for (i64 p : bad) {
    PrimeData pd;
    pd.p = p;
    pd.class_bits = p == 2 ? 3 : 2;
    pd.depth = default_padic_depth(D, p) + opts.depth_bump;
    std::vector<std::uint32_t> gen_class(gens.size());
    for (std::size_t i = 0; i < gens.size(); ++i) gen_class[i] = descent_detail::local_class(gens[i], p);
    pd.mask_class.assign(full, 0);
    for (Mask m = 1; m < full; ++m) {
      const int low = std::countr_zero(m);
      pd.mask_class[m] = pd.mask_class[m & (m - 1)] ^ gen_class[static_cast<std::size_t>(low)];
    }
    pd.verdict.assign(std::size_t{1} << (2 * pd.class_bits), -1);
    primes.push_back(std::move(pd));
  }

  std::vector<char> member(static_cast<std::size_t>(full) * full, 0);
  SelmerGroup group;
  group.D = D;
  group.method = SelmerMethod::Oracle;
  std::vector<gf2::Word> vectors;
  for (Mask m1 = 0; m1 < full; ++m1) {
    const i64 b1 = descent_detail::mask_value(m1, gens);
    if (!real_solvable(b1, 0, D)) continue;
    for (Mask m2 = 0; m2 < full; ++m2) {
      const i64 b2 = descent_detail::mask_value(m2, gens);
      bool ok = true;
      for (auto& pd : primes) {
        const std::size_t idx = pd.mask_class[m1] | (pd.mask_class[m2] << pd.class_bits);
        if (pd.verdict[idx] < 0) {
          pd.verdict[idx] = p_adic_solvable(Torsor{D, b1, b2}, pd.p, pd.depth, opts.method) ? 1 : 0;
        }
        if (!pd.verdict[idx]) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      member[static_cast<std::size_t>(m1) * full + m2] = 1;
      group.elements.push_back({b1, b2});
      vectors.push_back(static_cast<gf2::Word>(m1) | (static_cast<gf2::Word>(m2) << n));
    }
  }

  // Closure and torsion containment.
  const std::size_t count = vectors.size();
  if (count == 0 || (count & (count - 1)) != 0) {
    throw ConsistencyError("selmer_rank_oracle: D=" + std::to_string(D) + " gave " +
                           std::to_string(count) + " elements, not a power of two");
  }
  const gf2::Word low_mask = (gf2::Word{1} << n) - 1;
  for (gf2::Word a : vectors) {
    for (gf2::Word b : vectors) {
      const gf2::Word c = a ^ b;
      if (!member[static_cast<std::size_t>(c & low_mask) * full + (c >> n)]) {
        throw ConsistencyError("selmer_rank_oracle: D=" + std::to_string(D) +
                               " local-solvable set is not closed under multiplication");
      }
    }
  }
  for (const SelmerPair& t : torsion_images(D)) {
    const Mask a = descent_detail::value_mask(descent_detail::reduce_mod_squares(t.b1, gens), gens);
    const Mask b = descent_detail::value_mask(descent_detail::reduce_mod_squares(t.b2, gens), gens);
    if (!member[static_cast<std::size_t>(a) * full + b]) {
      throw ConsistencyError("selmer_rank_oracle: torsion image missing for D=" + std::to_string(D));
    }
  }

  for (gf2::Word w : gf2::echelon_basis(vectors)) {
    group.basis.push_back({descent_detail::mask_value(static_cast<Mask>(w & low_mask), gens),
                           descent_detail::mask_value(static_cast<Mask>(w >> n), gens)});
  }
  group.dim = std::countr_zero(count);
  group.s = group.dim - 2;
  return group;
}

// =============================================================================
// Monsky matrix
// =============================================================================

/// Monsky's matrix of a square-free D with odd prime factors p_1 < ... < p_t.
/// With [a/p] the additive Legendre symbol (0 for residues, 1 otherwise),
/// A_ij = [p_j/p_i] for i != j, A_ii = sum_{j != i} A_ij, and D_u = diag([u/p_i]):
///
///   D odd:  [ A + D_2    D_2      ]      D even (primes of D/2):  [ D_2        A + D_2 ]
///           [ D_2        A + D_-2 ]                               [ A^T + D_2  D_-1    ]
inline gf2::BitMatrix monsky_matrix_odd(const std::vector<i64>& odd_primes) {
  const std::size_t t = odd_primes.size();
  gf2::BitMatrix M(2 * t, 2 * t);
  auto sym = [](i64 a, i64 p) { return jacobi(a, p) == -1; };
  for (std::size_t i = 0; i < t; ++i) {
    bool diag = false;
    for (std::size_t j = 0; j < t; ++j) {
      if (i == j) continue;
      const bool a = sym(odd_primes[j], odd_primes[i]);
      diag ^= a;
      M.set(i, j, a);
      M.set(t + i, t + j, a);
    }
    const bool two = sym(2, odd_primes[i]);
    const bool mtwo = sym(-2, odd_primes[i]);
    M.set(i, i, diag ^ two);
    M.set(t + i, t + i, diag ^ mtwo);
    M.set(i, t + i, two);
    M.set(t + i, i, two);
  }
  return M;
}

inline gf2::BitMatrix monsky_matrix_even(const std::vector<i64>& odd_primes) {
  const std::size_t t = odd_primes.size();
  gf2::BitMatrix M(2 * t, 2 * t);
  auto sym = [](i64 a, i64 p) { return jacobi(a, p) == -1; };
  for (std::size_t i = 0; i < t; ++i) {
    bool diag = false;
    for (std::size_t j = 0; j < t; ++j) {
      if (i == j) continue;
      const bool a = sym(odd_primes[j], odd_primes[i]);
      diag ^= a;
      M.set(i, t + j, a);      // A in the upper-right block
      M.set(t + j, i, a);      // A^T in the lower-left block
    }
    const bool two = sym(2, odd_primes[i]);
    const bool mone = sym(-1, odd_primes[i]);
    M.set(i, i, two);
    M.set(i, t + i, diag ^ two);
    M.set(t + i, i, diag ^ two);
    M.set(t + i, t + i, mone);
  }
  return M;
}

/// s(D) = 2t - rank(M_D) for odd square-free D.
inline int monsky_rank(i64 D, const PrimeTable& table) {
  if (D % 2 == 0) throw DomainError("monsky_rank: D must be odd (even D uses monsky_rank_even)");
  const Factorization f = factor(D, table);
  if (!f.squarefree()) throw DomainError("monsky_rank: D is not square-free");
  const auto primes = f.primes();
  return static_cast<int>(2 * primes.size() - monsky_matrix_odd(primes).rank());
}

/// Even-D variant; used only after agreement with the oracle has been checked.
inline int monsky_rank_even(i64 D, const PrimeTable& table) {
  if (D % 2 != 0) throw DomainError("monsky_rank_even: D must be even");
  const Factorization f = factor(D / 2, table);
  if (!f.squarefree() || (D / 2) % 2 == 0) throw DomainError("monsky_rank_even: D is not square-free");
  const auto primes = f.primes();
  return static_cast<int>(2 * primes.size() - monsky_matrix_even(primes).rank());
}

/// s(D) by the matrix path for odd D (and even D when allowed), otherwise the oracle.
inline SelmerGroup selmer_rank(i64 D, const PrimeTable& table, bool even_matrix = false,
                               const OracleOptions& opts = {}) {
  if (D % 2 == 1 || even_matrix) {
    SelmerGroup g;
    g.D = D;
    g.method = SelmerMethod::Matrix;
    g.s = D % 2 == 1 ? monsky_rank(D, table) : monsky_rank_even(D, table);
    g.dim = g.s + 2;
    return g;
  }
  return selmer_rank_oracle(D, table, opts);
}

// =============================================================================
// Rational points and certification
// =============================================================================

struct RationalPoint {
  Big x_num, x_den;  // x = x_num / x_den, x_den > 0, reduced
  Big y_num, y_den;

  bool on_curve(i64 D) const {
    // y^2 = x^3 - D^2 x, cleared of denominators.
    const Big lhs = y_num * y_num * x_den * x_den * x_den;
    const Big rhs = (x_num * x_num * x_num - Big(D) * D * x_num * x_den * x_den) * y_den * y_den;
    return lhs == rhs;
  }
  bool is_torsion(i64 D) const {
    return y_num == 0 && x_den == 1 && (x_num == 0 || x_num == D || x_num == -D);
  }
};

namespace descent_detail {

inline RationalPoint make_point(const Big& xn, const Big& xd, const Big& yn, const Big& yd) {
  RationalPoint pt;
  Big g = boost::multiprecision::gcd(xn, xd);
  pt.x_num = xn / g;
  pt.x_den = xd / g;
  g = boost::multiprecision::gcd(yn, yd);
  pt.y_num = yn / g;
  pt.y_den = yd / g;
  if (pt.y_den < 0) {
    pt.y_den = -pt.y_den;
    pt.y_num = -pt.y_num;
  }
  return pt;
}

inline std::optional<i64> exact_sqrt(i64 n) {
  if (n < 0) return std::nullopt;
  const i64 r = isqrt(n);
  if (r * r != n) return std::nullopt;
  return r;
}

}  // namespace descent_detail

/// Searches for a non-torsion rational point through the descent
/// parametrization x + D = b1 (z1/z0)^2, x = b2 (z2/z0)^2 with
/// 1 <= z0, z1 <= H coprime. `classes` restricts the (b1, b2) tried; when
/// empty every real-admissible pair supported on 2D is used.
inline std::optional<RationalPoint> search_point(i64 D, i64 H, const PrimeTable& table,
                                                 const std::vector<SelmerPair>& classes = {}) {
  if (H < 1) throw DomainError("search_point: H must be >= 1");
  std::vector<SelmerPair> pairs = classes;
  if (pairs.empty()) {
    const auto gens = selmer_support(D, table);
    const descent_detail::Mask full = descent_detail::Mask{1} << gens.size();
    for (descent_detail::Mask m1 = 0; m1 < full; ++m1) {
      for (descent_detail::Mask m2 = 0; m2 < full; ++m2) {
        pairs.push_back({descent_detail::mask_value(m1, gens), descent_detail::mask_value(m2, gens)});
      }
    }
  }
  for (const SelmerPair& pr : pairs) {
    if (pr.b1 <= 0) continue;
    for (i64 z0 = 1; z0 <= H; ++z0) {
      for (i64 z1 = 1; z1 <= H; ++z1) {
        if (std::gcd(z0, z1) != 1) continue;
        const i128 lhs1 = static_cast<i128>(pr.b1) * z1 * z1 - static_cast<i128>(D) * z0 * z0;
        if (lhs1 % pr.b2 != 0) continue;
        const i128 w2 = lhs1 / pr.b2;
        if (w2 < 0 || w2 > static_cast<i128>(INT64_MAX)) continue;
        const auto z2 = descent_detail::exact_sqrt(static_cast<i64>(w2));
        if (!z2) continue;
        const i128 lhs2 = static_cast<i128>(pr.b1) * z1 * z1 - static_cast<i128>(2 * D) * z0 * z0;
        const i128 b12 = static_cast<i128>(pr.b1) * pr.b2;
        if (lhs2 % b12 != 0) continue;
        const i128 w3 = lhs2 / b12;
        if (w3 < 0 || w3 > static_cast<i128>(INT64_MAX)) continue;
        const auto z3 = descent_detail::exact_sqrt(static_cast<i64>(w3));
        if (!z3) continue;
        // x = (b1 z1^2 - D z0^2) / z0^2,  y = b1 b2 z1 z2 z3 / z0^3
        const Big xn = Big(pr.b1) * z1 * z1 - Big(D) * z0 * z0;
        const Big xd = Big(z0) * z0;
        const Big yn = Big(pr.b1) * pr.b2 * z1 * *z2 * *z3;
        const Big yd = Big(z0) * z0 * z0;
        RationalPoint pt = descent_detail::make_point(xn, xd, yn, yd);
        if (pt.is_torsion(D)) continue;
        if (!pt.on_curve(D)) throw ConsistencyError("search_point produced a point off the curve");
        return pt;
      }
    }
  }
  return std::nullopt;
}

enum class Congruence { NoncongruentCertified, CongruentCertified, Unknown };

inline const char* to_string(Congruence c) {
  switch (c) {
    case Congruence::NoncongruentCertified: return "NONCONGRUENT_CERTIFIED";
    case Congruence::CongruentCertified: return "CONGRUENT_CERTIFIED";
    case Congruence::Unknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

struct CongruenceStatus {
  i64 D = 0;
  Congruence status = Congruence::Unknown;
  std::optional<RationalPoint> witness;
};

/// s = 0 certifies rank 0; otherwise a found point certifies positive rank.
inline CongruenceStatus certify_status(i64 D, const SelmerGroup& selmer, i64 H, const PrimeTable& table) {
  if (selmer.D != D) throw DomainError("certify_status: Selmer group computed for another D");
  CongruenceStatus out;
  out.D = D;
  if (selmer.s == 0) {
    out.status = Congruence::NoncongruentCertified;
    return out;
  }
  if (auto pt = search_point(D, H, table, selmer.elements)) {
    out.status = Congruence::CongruentCertified;
    out.witness = std::move(pt);
  }
  return out;
}

}  // namespace cnstat
