#pragma once

/**
 * @file arith.hpp
 * @brief Exact integer arithmetic used throughout the pipeline.
 *
 * A smallest-prime-factor sieve backs factorization and square-free
 * enumeration for every D handled by the batch layers. The remaining helpers
 * (Jacobi symbol, modular square roots, two-square decomposition) are small
 * pure functions on 64-bit integers with 128-bit intermediates.
 */

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "cnstat/errors.hpp"

namespace cnstat {

using i64 = std::int64_t;
using u64 = std::uint64_t;
using i128 = __int128;

// =============================================================================
// Small modular helpers
// =============================================================================

inline i64 mod_floor(i64 a, i64 m) {
  i64 r = a % m;
  return r < 0 ? r + m : r;
}

inline i64 mul_mod(i64 a, i64 b, i64 m) {
  return static_cast<i64>((static_cast<i128>(mod_floor(a, m)) * mod_floor(b, m)) % m);
}

inline i64 pow_mod(i64 base, u64 exp, i64 m) {
  i64 result = 1 % m;
  base = mod_floor(base, m);
  while (exp > 0) {
    if (exp & 1U) result = mul_mod(result, base, m);
    base = mul_mod(base, base, m);
    exp >>= 1U;
  }
  return result;
}

/// Exact floor(sqrt(n)) for n >= 0.
inline i64 isqrt(i64 n) {
  if (n < 0) throw DomainError("isqrt: negative argument");
  auto r = static_cast<i64>(std::sqrt(static_cast<double>(n)));
  while (r > 0 && static_cast<i128>(r) * r > n) --r;
  while (static_cast<i128>(r + 1) * (r + 1) <= n) ++r;
  return r;
}

inline bool is_perfect_square(i64 n) {
  if (n < 0) return false;
  i64 r = isqrt(n);
  return r * r == n;
}

/// Exponent of the prime p in n (n != 0).
inline int valuation(i64 n, i64 p) {
  if (n == 0) throw DomainError("valuation of zero");
  int v = 0;
  while (n % p == 0) {
    n /= p;
    ++v;
  }
  return v;
}

// =============================================================================
// Sieve
// =============================================================================

/// Default memory budget for a PrimeTable (bytes of spf storage).
inline constexpr std::size_t kDefaultSieveBudgetBytes = std::size_t{1} << 30;

/// Smallest-prime-factor table for 0..limit. spf[0] = spf[1] = 0.
class PrimeTable {
 public:
  PrimeTable() = default;

  explicit PrimeTable(std::uint32_t limit, std::size_t budget_bytes = kDefaultSieveBudgetBytes)
      : limit_(limit) {
    if (limit < 2) throw DomainError("build_prime_table: limit must be >= 2");
    if (static_cast<std::size_t>(limit) + 1 > budget_bytes / sizeof(std::uint32_t)) {
      throw CapacityError("build_prime_table: limit " + std::to_string(limit) +
                          " exceeds the sieve memory budget");
    }
    spf_.assign(static_cast<std::size_t>(limit) + 1, 0);
    for (std::uint32_t i = 2; i <= limit; ++i) {
      if (spf_[i] == 0) {
        spf_[i] = i;
        primes_.push_back(i);
      }
      for (std::uint32_t p : primes_) {
        if (p > spf_[i]) break;
        const u64 next = static_cast<u64>(p) * i;
        if (next > limit) break;
        spf_[next] = p;
      }
    }
  }

  std::uint32_t limit() const { return limit_; }
  std::uint32_t spf(std::uint32_t n) const { return spf_.at(n); }
  const std::vector<std::uint32_t>& spf_array() const { return spf_; }
  const std::vector<std::uint32_t>& primes() const { return primes_; }

  bool is_prime(i64 n) const {
    if (n < 2) return false;
    if (n > limit_) throw RangeError("is_prime: " + std::to_string(n) + " beyond sieve limit");
    return spf_[static_cast<std::size_t>(n)] == n;
  }

  /// The n-th prime, 1-based (p_1 = 2).
  std::uint32_t nth_prime(std::size_t n) const {
    if (n == 0 || n > primes_.size()) {
      throw RangeError("nth_prime: index " + std::to_string(n) + " beyond table");
    }
    return primes_[n - 1];
  }

 private:
  std::uint32_t limit_ = 0;
  std::vector<std::uint32_t> spf_;
  std::vector<std::uint32_t> primes_;
};

inline PrimeTable build_prime_table(std::uint32_t limit,
                                    std::size_t budget_bytes = kDefaultSieveBudgetBytes) {
  return PrimeTable(limit, budget_bytes);
}

struct PrimePower {
  i64 prime;
  int exponent;
  bool operator==(const PrimePower&) const = default;
};

struct Factorization {
  i64 n = 1;
  std::vector<PrimePower> factors;  // strictly increasing primes
  int omega = 0;

  bool squarefree() const {
    for (const auto& f : factors) {
      if (f.exponent > 1) return false;
    }
    return true;
  }

  std::vector<i64> primes() const {
    std::vector<i64> out;
    out.reserve(factors.size());
    for (const auto& f : factors) out.push_back(f.prime);
    return out;
  }
};

/// Complete factorization of 1 <= n <= table.limit().
inline Factorization factor(i64 n, const PrimeTable& table) {
  if (n < 1) throw DomainError("factor: n must be positive");
  if (n > table.limit()) {
    throw RangeError("factor: " + std::to_string(n) + " exceeds sieve limit " +
                     std::to_string(table.limit()));
  }
  Factorization f;
  f.n = n;
  auto m = static_cast<std::uint32_t>(n);
  while (m > 1) {
    const std::uint32_t p = table.spf(m);
    int e = 0;
    while (m % p == 0) {
      m /= p;
      ++e;
    }
    f.factors.push_back({p, e});
  }
  f.omega = static_cast<int>(f.factors.size());
  return f;
}

inline bool is_squarefree(i64 n, const PrimeTable& table) { return factor(n, table).squarefree(); }

/// Square-free n in [1, X], increasing.
inline std::vector<i64> enumerate_squarefree(i64 X, const PrimeTable& table) {
  if (X < 1) return {};
  if (X > table.limit()) {
    throw RangeError("enumerate_squarefree: X exceeds sieve limit");
  }
  std::vector<char> bad(static_cast<std::size_t>(X) + 1, 0);
  for (std::uint32_t p : table.primes()) {
    const i64 q = static_cast<i64>(p) * p;
    if (q > X) break;
    for (i64 k = q; k <= X; k += q) bad[static_cast<std::size_t>(k)] = 1;
  }
  std::vector<i64> out;
  out.reserve(static_cast<std::size_t>(0.61 * static_cast<double>(X)) + 8);
  for (i64 n = 1; n <= X; ++n) {
    if (!bad[static_cast<std::size_t>(n)]) out.push_back(n);
  }
  return out;
}

// =============================================================================
// Quadratic symbols and square roots
// =============================================================================

/// Jacobi symbol (a/n) for odd n >= 1; a is reduced mod n first.
inline int jacobi(i64 a, i64 n) {
  if (n < 1 || n % 2 == 0) throw DomainError("jacobi: modulus must be odd and positive");
  a = mod_floor(a, n);
  int result = 1;
  while (a != 0) {
    while (a % 2 == 0) {
      a /= 2;
      const i64 r = n % 8;
      if (r == 3 || r == 5) result = -result;
    }
    std::swap(a, n);
    if (a % 4 == 3 && n % 4 == 3) result = -result;
    a %= n;
  }
  return n == 1 ? result : 0;
}

/// Square root of a modulo an odd prime p (Tonelli-Shanks). Requires (a/p) != -1.
inline i64 sqrt_mod(i64 a, i64 p) {
  a = mod_floor(a, p);
  if (a == 0) return 0;
  if (p == 2) return a;
  if (jacobi(a, p) != 1) throw DomainError("sqrt_mod: not a quadratic residue");
  if (p % 4 == 3) return pow_mod(a, static_cast<u64>((p + 1) / 4), p);

  i64 q = p - 1;
  int s = 0;
  while (q % 2 == 0) {
    q /= 2;
    ++s;
  }
  i64 z = 2;
  while (jacobi(z, p) != -1) ++z;

  i64 m = s;
  i64 c = pow_mod(z, static_cast<u64>(q), p);
  i64 t = pow_mod(a, static_cast<u64>(q), p);
  i64 r = pow_mod(a, static_cast<u64>((q + 1) / 2), p);
  while (t != 1) {
    i64 i = 0;
    i64 tt = t;
    while (tt != 1) {
      tt = mul_mod(tt, tt, p);
      ++i;
    }
    i64 b = c;
    for (i64 j = 0; j < m - i - 1; ++j) b = mul_mod(b, b, p);
    m = i;
    c = mul_mod(b, b, p);
    t = mul_mod(t, c, p);
    r = mul_mod(r, b, p);
  }
  return r;
}

struct TwoSquares {
  i64 a;  // odd
  i64 b;  // even, nonnegative
  bool operator==(const TwoSquares&) const = default;
};

/// p = a^2 + b^2 for a prime p = 1 (mod 4), normalized so that a is odd,
/// b >= 0 is even, and a + b = 1 (mod 4). Cornacchia's descent from a square
/// root of -1.
inline TwoSquares two_squares(i64 p) {
  if (p < 5 || mod_floor(p, 4) != 1) throw DomainError("two_squares: p must be a prime = 1 mod 4");
  i64 x = sqrt_mod(p - 1, p);
  if (x > p / 2) x = p - x;
  i64 r0 = p;
  i64 r1 = x;
  const i64 bound = isqrt(p);
  while (r1 > bound) {
    const i64 r2 = r0 % r1;
    r0 = r1;
    r1 = r2;
  }
  i64 a = r1;
  const i64 rest = p - a * a;
  i64 b = isqrt(rest);
  if (b * b != rest) throw DomainError("two_squares: p is not prime");
  if (a % 2 == 0) std::swap(a, b);
  b = std::abs(b);
  a = std::abs(a);
  if (mod_floor(a + b, 4) != 1) a = -a;
  return {a, b};
}

/// Square-free kernel of a nonzero integer, keeping the sign.
inline i64 squarefree_part(i64 n, const PrimeTable& table) {
  if (n == 0) throw DomainError("squarefree_part of zero");
  const i64 sign = n < 0 ? -1 : 1;
  i64 out = 1;
  for (const auto& f : factor(n * sign, table).factors) {
    if (f.exponent % 2 == 1) out *= f.prime;
  }
  return sign * out;
}

}  // namespace cnstat
