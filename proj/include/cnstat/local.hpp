#pragma once

/**
 * @file local.hpp
 * @brief Local (p-adic) solvability of 2-covering torsors of y^2 = x^3 - D^2 x.
 *
 * A pair (b1, b2) of square-free integers defines the torsor
 *
 *     Q1: b1 z1^2 - b2 z2^2    - D  z0^2 = 0
 *     Q2: b1 z1^2 - b1 b2 z3^2 - 2D z0^2 = 0
 *
 * coming from x + D = b1 (z1/z0)^2, x = b2 (z2/z0)^2, x - D = b1 b2 (z3/z0)^2.
 *
 * Two independent deciders are provided:
 *
 *  - LineSearch projects a point to (z0 : z1) in P^1(Q_p). A point exists iff
 *    some (z0 : z1) makes both  b2 (b1 z1^2 - D z0^2)  and
 *    b1 b2 (b1 z1^2 - 2D z0^2)  p-adic squares. Balls of P^1(Q_p) are refined
 *    until the square class of both values is constant on the ball; roots are
 *    certified with the univariate Hensel criterion. The work per ball is
 *    O(1) except for a residue scan over F_p, so large primes are cheap.
 *
 *  - QuadricDigits runs a depth-first search over p-adic digit expansions of
 *    primitive (z0, z1, z2, z3) and accepts on the multivariate Hensel
 *    criterion (both quadrics vanish mod p^{2m+1} and some 2x2 Jacobian minor
 *    has valuation <= m). Exponential in p; used to cross-check LineSearch
 *    at small primes.
 *
 * Both return "not solvable" when the search tree is exhausted at the given
 * depth, so correctness at a depth is asserted by depth-stability tests.
 */

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "cnstat/arith.hpp"
#include "cnstat/errors.hpp"

namespace cnstat {

using Big = boost::multiprecision::cpp_int;

struct Torsor {
  i64 D;
  i64 b1;
  i64 b2;

  Big q1(const std::array<Big, 4>& z) const {
    return Big(b1) * z[1] * z[1] - Big(b2) * z[2] * z[2] - Big(D) * z[0] * z[0];
  }
  Big q2(const std::array<Big, 4>& z) const {
    return Big(b1) * z[1] * z[1] - Big(b1) * b2 * z[3] * z[3] - Big(2 * D) * z[0] * z[0];
  }
  bool contains(const std::array<Big, 4>& z) const { return q1(z) == 0 && q2(z) == 0; }
};

enum class LocalMethod { LineSearch, QuadricDigits };

/// Smallest accepted search depth at p for the curve E_D.
inline int min_padic_depth(i64 D, i64 p) { return 2 * valuation(4 * D * D, p) + 1; }

/// Default search depth at p: 2 v_p(4 D^2) + 5.
inline int default_padic_depth(i64 D, i64 p) { return min_padic_depth(D, p) + 4; }

namespace local_detail {

inline int big_valuation(const Big& n, i64 p) {
  if (n == 0) return 1 << 30;
  if (p == 2) return static_cast<int>(boost::multiprecision::lsb(boost::multiprecision::abs(n)));
  Big m = n;
  int v = 0;
  const Big bp = p;
  while (true) {
    Big q, r;
    boost::multiprecision::divide_qr(m, bp, q, r);
    if (r != 0) break;
    m = q;
    ++v;
  }
  return v;
}

inline Big big_pow(i64 p, int e) {
  Big r = 1;
  for (int i = 0; i < e; ++i) r *= p;
  return r;
}

inline i64 big_mod(const Big& n, i64 m) {
  Big r = n % m;
  i64 v = static_cast<i64>(r);
  return v < 0 ? v + m : v;
}

}  // namespace local_detail

/// True iff the nonzero integer n is a square in Q_p.
inline bool is_padic_square(const Big& n, i64 p) {
  if (n == 0) return true;
  const int v = local_detail::big_valuation(n, p);
  if (v % 2 != 0) return false;
  const Big unit = n / local_detail::big_pow(p, v);
  if (p == 2) return local_detail::big_mod(unit, 8) == 1;
  return jacobi(local_detail::big_mod(unit, p), p) == 1;
}

namespace local_detail {

// G(t) = alpha + beta t^2 over Z_p.
struct EvenQuadratic {
  Big alpha;
  Big beta;
};

enum class ClassKind { Square, NonSquare, Open };

struct BallPoly {
  ClassKind kind = ClassKind::Open;
  Big value;  // G(t0)
  Big deriv;  // G'(t0), unscaled
  // odd p only: G(t0 + p^k s) = p^mu * gbar(s) (mod p^{mu+1}), gbar = a + b s + c s^2
  int mu = 0;
  i64 a = 0, b = 0, c = 0;
};

class LineSearch {
 public:
  LineSearch(i64 p, int depth) : p_(p), depth_(depth) {}

  bool solvable(const EvenQuadratic& g1, const EvenQuadratic& g2) {
    polys_ = {g1, g2};
    return ball(Big(0), 0);
  }

 private:
  BallPoly classify(const EvenQuadratic& g, const Big& t0, const Big& pk) const {
    BallPoly out;
    out.value = g.alpha + g.beta * t0 * t0;
    out.deriv = 2 * g.beta * t0;
    const Big A = out.value;
    const Big B = out.deriv * pk;
    const Big C = g.beta * pk * pk;
    const int vA = big_valuation(A, p_);
    const int vB = big_valuation(B, p_);
    const int vC = big_valuation(C, p_);
    if (p_ == 2) {
      if (A != 0 && vB >= vA + 3 && vC >= vA + 3) {
        const Big unit = A / big_pow(2, vA);
        const bool sq = vA % 2 == 0 && big_mod(unit, 8) == 1;
        out.kind = sq ? ClassKind::Square : ClassKind::NonSquare;
      }
      return out;
    }
    out.mu = std::min(vA, std::min(vB, vC));
    const Big scale = big_pow(p_, out.mu);
    out.a = A == 0 ? 0 : (vA == out.mu ? big_mod(A / scale, p_) : 0);
    out.b = B == 0 ? 0 : (vB == out.mu ? big_mod(B / scale, p_) : 0);
    out.c = C == 0 ? 0 : (vC == out.mu ? big_mod(C / scale, p_) : 0);
    if (out.b == 0 && out.c == 0 && out.a != 0) {
      const bool sq = out.mu % 2 == 0 && jacobi(out.a, p_) == 1;
      out.kind = sq ? ClassKind::Square : ClassKind::NonSquare;
    }
    return out;
  }

  // A root of G lies in the ball t0 + p^k Z_p (univariate Hensel).
  bool hensel_root_in_ball(const BallPoly& bp, int k) const {
    if (bp.value == 0) return true;
    if (bp.deriv == 0) return false;
    const int vg = big_valuation(bp.value, p_);
    const int vd = big_valuation(bp.deriv, p_);
    return vg > 2 * vd && vg - vd >= k;
  }

  std::vector<i64> residue_roots(const BallPoly& bp) const {
    std::vector<i64> roots;
    const i64 a = bp.a, b = bp.b, c = bp.c;
    if (c == 0) {
      if (b == 0) return roots;  // nonzero constant (a == 0 is impossible here)
      roots.push_back(mul_mod(mod_floor(-a, p_), pow_mod(b, static_cast<u64>(p_ - 2), p_), p_));
      return roots;
    }
    const i64 disc = mod_floor(mul_mod(b, b, p_) - mul_mod(4 * c % p_, a, p_), p_);
    const int chi = jacobi(disc, p_);
    if (chi == -1) return roots;
    const i64 r = sqrt_mod(disc, p_);
    const i64 inv2c = pow_mod(mod_floor(2 * c, p_), static_cast<u64>(p_ - 2), p_);
    roots.push_back(mul_mod(mod_floor(-b + r, p_), inv2c, p_));
    if (r != 0) roots.push_back(mul_mod(mod_floor(-b - r, p_), inv2c, p_));
    return roots;
  }

  i64 eval_residue(const BallPoly& bp, i64 s) const {
    return mod_floor(bp.a + mul_mod(bp.b, s, p_) + mul_mod(bp.c, mul_mod(s, s, p_), p_), p_);
  }

  bool ball(const Big& t0, int k) {
    const Big pk = big_pow(p_, k);
    std::array<BallPoly, 2> st = {classify(polys_[0], t0, pk), classify(polys_[1], t0, pk)};
    for (const auto& s : st) {
      if (s.kind == ClassKind::NonSquare) return false;
    }
    if (st[0].kind == ClassKind::Square && st[1].kind == ClassKind::Square) return true;

    for (int i = 0; i < 2; ++i) {
      const int j = 1 - i;
      if (st[i].kind != ClassKind::Open) continue;
      if (st[i].value == 0 && st[j].value != 0 && is_padic_square(st[j].value, p_)) return true;
      if (st[j].kind == ClassKind::Square && hensel_root_in_ball(st[i], k)) return true;
    }
    if (k >= depth_) return false;

    if (p_ == 2) return ball(t0, k + 1) || ball(t0 + pk, k + 1);

    std::vector<i64> special;
    bool generic_possible = true;
    bool all_constant = true;
    for (const auto& s : st) {
      if (s.kind != ClassKind::Open) continue;
      for (i64 r : residue_roots(s)) {
        if (std::find(special.begin(), special.end(), r) == special.end()) special.push_back(r);
      }
      if (s.mu % 2 != 0) generic_possible = false;
      if (s.b != 0 || s.c != 0) all_constant = false;
    }

    if (generic_possible) {
      auto accepts = [&](i64 s) {
        for (const auto& bp : st) {
          if (bp.kind != ClassKind::Open) continue;
          const i64 v = eval_residue(bp, s);
          if (v == 0 || jacobi(v, p_) != 1) return false;
        }
        return true;
      };
      if (all_constant) {
        if (accepts(0)) return true;
      } else {
        for (i64 s = 0; s < p_; ++s) {
          if (std::find(special.begin(), special.end(), s) != special.end()) continue;
          if (accepts(s)) return true;
        }
      }
    }
    for (i64 s : special) {
      if (ball(t0 + pk * s, k + 1)) return true;
    }
    return false;
  }

  i64 p_;
  int depth_;
  std::array<EvenQuadratic, 2> polys_;
};

class QuadricDigits {
 public:
  QuadricDigits(const Torsor& t, i64 p, int depth) : t_(t), p_(p), depth_(depth) {}

  bool solvable() {
    for (int pivot = 0; pivot < 4; ++pivot) {
      pivot_ = pivot;
      std::array<Big, 4> z{};
      z[pivot] = 1;
      if (extend(z, 0, 1)) return true;
    }
    return false;
  }

 private:
  // Assigns the level-(k-1) digit of the free coordinates idx..3, then recurses.
  bool extend(std::array<Big, 4>& z, int idx, int k) {
    if (idx == 4) return node(z, k);
    if (idx == pivot_) return extend(z, idx + 1, k);
    const Big pk1 = local_detail::big_pow(p_, k - 1);
    const Big saved = z[idx];
    const i64 digits = (k == 1 && idx < pivot_) ? 1 : p_;
    for (i64 d = 0; d < digits; ++d) {
      z[idx] = saved + pk1 * d;
      if (extend(z, idx + 1, k)) return true;
    }
    z[idx] = saved;
    return false;
  }

  bool node(std::array<Big, 4>& z, int k) {
    const Big f1 = t_.q1(z);
    const Big f2 = t_.q2(z);
    const Big pk = local_detail::big_pow(p_, k);
    if (f1 % pk != 0 || f2 % pk != 0) return false;
    const int vf = std::min(local_detail::big_valuation(f1, p_), local_detail::big_valuation(f2, p_));
    const int vminor = min_minor_valuation(z);
    for (int m = 0; 2 * m < depth_; ++m) {
      if (vminor <= m && vf >= 2 * m + 1) return true;
    }
    if (k >= depth_) return false;
    return extend(z, 0, k + 1);
  }

  int min_minor_valuation(const std::array<Big, 4>& z) const {
    const Big D = t_.D, b1 = t_.b1, b2 = t_.b2;
    const std::array<Big, 4> g1 = {-2 * D * z[0], 2 * b1 * z[1], -2 * b2 * z[2], Big(0)};
    const std::array<Big, 4> g2 = {-4 * D * z[0], 2 * b1 * z[1], Big(0), -2 * b1 * b2 * z[3]};
    int best = 1 << 30;
    for (int i = 0; i < 4; ++i) {
      for (int j = i + 1; j < 4; ++j) {
        const Big minor = g1[i] * g2[j] - g1[j] * g2[i];
        if (minor != 0) best = std::min(best, local_detail::big_valuation(minor, p_));
      }
    }
    return best;
  }

  Torsor t_;
  i64 p_;
  int depth_;
  int pivot_ = 0;
};

}  // namespace local_detail

/// Does the torsor have a point over Q_p? p must be 2 or divide D.
inline bool p_adic_solvable(const Torsor& t, i64 p, int depth,
                            LocalMethod method = LocalMethod::LineSearch) {
  if (p != 2 && t.D % p != 0) throw DomainError("p_adic_solvable: p must be 2 or divide D");
  if (depth < min_padic_depth(t.D, p)) {
    throw ConfigurationError("p_adic_solvable: depth " + std::to_string(depth) +
                             " below minimum " + std::to_string(min_padic_depth(t.D, p)));
  }
  if (method == LocalMethod::QuadricDigits) {
    return local_detail::QuadricDigits(t, p, depth).solvable();
  }
  const Big D = t.D, b1 = t.b1, b2 = t.b2, P = p;
  local_detail::LineSearch search(p, depth);
  // Chart z1 = 1, t = z0 in Z_p.
  if (search.solvable({b1 * b2, -D * b2}, {b1 * b1 * b2, -2 * D * b1 * b2})) return true;
  // Chart z0 = 1, z1 = p u with u in Z_p.
  return search.solvable({-D * b2, b1 * b2 * P * P}, {-2 * D * b1 * b2, b1 * b1 * b2 * P * P});
}

/// Existence of a real point: x + D >= 0 on E_D(R), so b1 must be positive.
inline bool real_solvable(i64 b1, i64 /*b2*/, i64 /*D*/) { return b1 > 0; }

}  // namespace cnstat
