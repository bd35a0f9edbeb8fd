#include <gtest/gtest.h>

#include <cstdint>
#include <vector>

#include "cnstat/arith.hpp"

using namespace cnstat;

namespace {

// Test-side oracles: trial division and Euler's criterion.
i64 smallest_factor(i64 n) {
  for (i64 d = 2; d * d <= n; ++d) {
    if (n % d == 0) return d;
  }
  return n;
}

int euler_symbol(i64 a, i64 p) {
  const i64 r = pow_mod(mod_floor(a, p), static_cast<u64>((p - 1) / 2), p);
  return r == 0 ? 0 : (r == 1 ? 1 : -1);
}

}  // namespace

TEST(PrimeTable, SmallestPrimeFactorsUpToTen) {
  const auto t = build_prime_table(10);
  const std::vector<std::uint32_t> want = {0, 0, 2, 3, 2, 5, 2, 7, 2, 3, 2};
  EXPECT_EQ(t.spf_array(), want);
  EXPECT_EQ(build_prime_table(2).spf(2), 2U);
}

TEST(PrimeTable, AgreesWithTrialDivision) {
  const auto t = build_prime_table(20000);
  for (i64 n = 2; n <= 20000; ++n) ASSERT_EQ(t.spf(static_cast<std::uint32_t>(n)), smallest_factor(n)) << n;
  EXPECT_EQ(t.nth_prime(1), 2U);
  EXPECT_EQ(t.nth_prime(37), 157U);
  EXPECT_THROW(t.nth_prime(0), RangeError);
}

TEST(PrimeTable, LargeLimit) {
  const auto t = build_prime_table(3000000);
  EXPECT_EQ(smallest_factor(2999999), 2999999);
  EXPECT_TRUE(t.is_prime(2999999));
  const auto f = factor(2999999, t);
  ASSERT_EQ(f.factors.size(), 1U);
  EXPECT_EQ(f.factors[0], (PrimePower{2999999, 1}));
  EXPECT_EQ(enumerate_squarefree(3000000, t).size(), 1823773U);
  EXPECT_EQ(enumerate_squarefree(1000000, t).size(), 607926U);
}

TEST(PrimeTable, BudgetAndDomain) {
  EXPECT_THROW(build_prime_table(1), DomainError);
  EXPECT_THROW(build_prime_table(1000000, 1000), CapacityError);
}

TEST(Factor, Examples) {
  const auto t = build_prime_table(1000);
  const auto f12 = factor(12, t);
  EXPECT_EQ(f12.factors, (std::vector<PrimePower>{{2, 2}, {3, 1}}));
  EXPECT_EQ(f12.omega, 2);
  EXPECT_FALSE(f12.squarefree());
  const auto f105 = factor(105, t);
  EXPECT_EQ(f105.factors, (std::vector<PrimePower>{{3, 1}, {5, 1}, {7, 1}}));
  EXPECT_EQ(f105.omega, 3);
  EXPECT_THROW(factor(0, t), DomainError);
  EXPECT_THROW(factor(1001, t), RangeError);
}

TEST(Factor, ProductReconstructsN) {
  const auto t = build_prime_table(50000);
  for (i64 n = 1; n <= 50000; n += 7) {
    i64 prod = 1;
    for (const auto& pp : factor(n, t).factors) {
      for (int e = 0; e < pp.exponent; ++e) prod *= pp.prime;
    }
    ASSERT_EQ(prod, n);
  }
}

TEST(Squarefree, SmallRange) {
  const auto t = build_prime_table(100);
  EXPECT_EQ(enumerate_squarefree(10, t), (std::vector<i64>{1, 2, 3, 5, 6, 7, 10}));
  EXPECT_TRUE(enumerate_squarefree(0, t).empty());
}

TEST(Squarefree, MoebiusCountOracle) {
  // #SF(X) = sum_d mu(d) floor(X / d^2)
  const i64 X = 200000;
  const auto t = build_prime_table(static_cast<std::uint32_t>(X));
  i64 count = 0;
  for (i64 d = 1; d * d <= X; ++d) {
    const auto f = factor(d, t);
    if (!f.squarefree()) continue;
    count += (f.omega % 2 ? -1 : 1) * (X / (d * d));
  }
  EXPECT_EQ(static_cast<i64>(enumerate_squarefree(X, t).size()), count);
}

TEST(Jacobi, Examples) {
  EXPECT_EQ(jacobi(2, 7), 1);
  EXPECT_EQ(jacobi(5, 13), -1);
  EXPECT_EQ(jacobi(0, 5), 0);
  EXPECT_THROW(jacobi(3, 8), DomainError);
}

TEST(Jacobi, MatchesEulerCriterionOnPrimes) {
  const auto t = build_prime_table(2000);
  for (std::uint32_t p : t.primes()) {
    if (p == 2) continue;
    for (i64 a = -30; a <= 3 * static_cast<i64>(p); a += 1 + static_cast<i64>(p) / 50) {
      ASSERT_EQ(jacobi(a, p), euler_symbol(a, p)) << a << " " << p;
    }
  }
}

TEST(SqrtMod, SquaresBack) {
  const auto t = build_prime_table(5000);
  for (std::uint32_t p : t.primes()) {
    if (p == 2) continue;
    for (i64 a = 1; a < std::min<i64>(p, 200); ++a) {
      if (jacobi(a, p) != 1) continue;
      const i64 r = sqrt_mod(a, p);
      ASSERT_EQ(mul_mod(r, r, p), a % p);
    }
  }
  EXPECT_THROW(sqrt_mod(3, 7), DomainError);
}

TEST(TwoSquares, Examples) {
  EXPECT_EQ(two_squares(5), (TwoSquares{-1, 2}));
  EXPECT_EQ(two_squares(13), (TwoSquares{3, 2}));
  EXPECT_EQ(two_squares(29), (TwoSquares{-5, 2}));
  EXPECT_THROW(two_squares(7), DomainError);
}

TEST(TwoSquares, Normalization) {
  const auto t = build_prime_table(100000);
  for (std::uint32_t p : t.primes()) {
    if (p % 4 != 1) continue;
    const auto ts = two_squares(p);
    ASSERT_EQ(ts.a * ts.a + ts.b * ts.b, static_cast<i64>(p));
    ASSERT_NE(ts.a % 2, 0);
    ASSERT_EQ(ts.b % 2, 0);
    ASSERT_GE(ts.b, 0);
    ASSERT_EQ(mod_floor(ts.a + ts.b, 4), 1);
  }
}

TEST(SquarefreePart, KeepsSign) {
  const auto t = build_prime_table(1000);
  EXPECT_EQ(squarefree_part(-12, t), -3);
  EXPECT_EQ(squarefree_part(72, t), 2);
  EXPECT_EQ(squarefree_part(1, t), 1);
  EXPECT_THROW(squarefree_part(0, t), DomainError);
}

TEST(Helpers, IsqrtAndValuation) {
  for (i64 n = 0; n < 100000; n += 13) {
    const i64 r = isqrt(n);
    ASSERT_LE(r * r, n);
    ASSERT_GT((r + 1) * (r + 1), n);
  }
  EXPECT_EQ(isqrt(INT64_MAX), 3037000499);
  EXPECT_TRUE(is_perfect_square(1296));
  EXPECT_FALSE(is_perfect_square(-4));
  EXPECT_EQ(valuation(96, 2), 5);
  EXPECT_EQ(valuation(96, 3), 1);
}
