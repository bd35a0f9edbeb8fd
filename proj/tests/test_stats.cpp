#include <gtest/gtest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "cnstat/descent.hpp"
#include "cnstat/stats.hpp"

using namespace cnstat;

namespace {

std::vector<CurveRecord> records_with(const std::vector<std::pair<i64, int>>& ds) {
  std::vector<CurveRecord> out;
  for (auto [D, s] : ds) {
    auto r = make_record(D);
    r.s2 = s;
    out.push_back(r);
  }
  return out;
}

const std::vector<CurveRecord>& computed_records() {
  static const std::vector<CurveRecord> recs = [] {
    const auto t = build_prime_table(100000);
    std::vector<CurveRecord> out;
    for (i64 D : enumerate_squarefree(100000, t)) {
      auto r = make_record(D);
      r.s2 = selmer_rank(D, t, true).s;
      out.push_back(r);
    }
    return out;
  }();
  return recs;
}

}  // namespace

TEST(Keys, Parse) {
  EXPECT_TRUE(parse_class_key("all").residues.empty());
  EXPECT_EQ(parse_class_key("1,3").residues, (std::set<int>{1, 3}));
  EXPECT_EQ(parse_class_key("5").residues, (std::set<int>{5}));
  EXPECT_THROW(parse_class_key("4"), DomainError);
  EXPECT_THROW(parse_class_key("x"), DomainError);
  EXPECT_EQ(parse_rank_column("mw"), RankColumn::MW);
  EXPECT_THROW(parse_rank_column("zz"), DomainError);
}

TEST(Models, HeathBrownMoments) {
  EXPECT_DOUBLE_EQ(hb_moment_constant(1), 3.0);
  EXPECT_DOUBLE_EQ(hb_moment_constant(2), 15.0);
  EXPECT_DOUBLE_EQ(hb_moment_constant(3), 135.0);
  EXPECT_THROW(hb_moment_constant(0), DomainError);
}

TEST(Models, HeathBrownPmfTable) {
  const double want[] = {0.419422, 0.838845, 0.559230, 0.223692, 0.063912, 0.014203};
  for (int r = 0; r < 6; ++r) EXPECT_NEAR(hb_rank_pmf(r), want[r], 5e-7) << r;
  // Each parity class carries total mass above 1 under this model.
  double even = 0.0, odd = 0.0;
  for (int r = 0; r < 40; ++r) (r % 2 ? odd : even) += hb_rank_pmf(r);
  EXPECT_NEAR(even, 1.0452, 1e-4);
  EXPECT_NEAR(odd, 1.0771, 1e-4);
  EXPECT_LT(hb_rank_pmf_displayed(2), hb_rank_pmf(2));
}

TEST(Models, TrailingBound) {
  const double want[] = {1.7313, 1.7313, 0.865650, 0.216413, 0.027052, 0.001691};
  for (int r = 0; r < 6; ++r) EXPECT_NEAR(trailing_bound(r), want[r], 5e-7) << r;
  EXPECT_NEAR(1.7313 * std::ldexp(1.0, -6), 0.027052, 5e-7);
}

TEST(Models, AverageRankConstants) {
  const auto c3 = average_rank_constant(3);
  EXPECT_TRUE(c3.discrepancy);
  EXPECT_DOUBLE_EQ(c3.text_value, 1.2039);
  EXPECT_DOUBLE_EQ(c3.table_value, 1.2309);
  EXPECT_FALSE(average_rank_constant(5).discrepancy);
  EXPECT_THROW(average_rank_constant(2), DomainError);
}

TEST(Models, PoonenRains) {
  EXPECT_NEAR(pr_pmf(0), 0.209711, 5e-7);
  EXPECT_NEAR(pr_pmf(1), 2.0 * pr_pmf(0), 1e-15);
  double s = 0.0;
  for (int d = 0; d <= 30; ++d) s += pr_pmf(d);
  EXPECT_NEAR(s, 1.0, 1e-6);
  EXPECT_DOUBLE_EQ(pr_moment(1), 3.0);
  EXPECT_DOUBLE_EQ(pr_moment(2), 15.0);
  EXPECT_DOUBLE_EQ(pr_moment(4), 2295.0);
  // sum_d 2^d pr(d) = 3 (average Selmer size)
  double m = 0.0;
  for (int d = 0; d <= 60; ++d) m += std::ldexp(pr_pmf(d), d);
  EXPECT_NEAR(m, 3.0, 1e-9);
}

TEST(Models, Delaunay) {
  EXPECT_NEAR(delaunay_pmf(2, 1, 0), 0.838845, 1e-6);
  for (i64 p : {2, 3}) {
    for (int r : {0, 1}) {
      double s = 0.0;
      for (int n = 0; n <= 20; ++n) s += delaunay_pmf(p, r, n);
      EXPECT_NEAR(s, 1.0, 1e-4) << p << " " << r;
    }
  }
  // n = 0 is the bare infinite product.
  double prod = 1.0;
  for (int i = 1; i < 200; ++i) prod *= 1.0 - std::pow(3.0, -(2.0 * i - 1.0));
  EXPECT_NEAR(delaunay_pmf(3, 0, 0), prod, 1e-12);
  EXPECT_THROW(delaunay_pmf(2, 2, 0), DomainError);
}

TEST(Models, LogFactor) {
  EXPECT_NEAR(log_factor(1, std::exp(16.0)), std::pow(std::log(16.0), 4) / 2.0, 1e-9);
  EXPECT_NEAR(log_factor(1, std::exp(16.0)), 29.5469, 1e-4);
  EXPECT_THROW(log_factor(1, 2.0), DomainError);
}

TEST(Empirical, HandBuiltDistribution) {
  const auto recs = records_with({{1, 0}, {3, 2}, {11, 0}, {17, 2}, {5, 1}, {19, 0}});
  const auto rep = empirical_distribution(recs, RankColumn::S2, ClassKey::low_odd());
  EXPECT_EQ(rep.size, 5);
  EXPECT_EQ(rep.counts.at(0), 3);
  EXPECT_EQ(rep.counts.at(2), 2);
  EXPECT_DOUBLE_EQ(rep.pmf.at(0), 0.6);
  EXPECT_DOUBLE_EQ(rep.mean, 0.8);
  EXPECT_DOUBLE_EQ(rep.moments[0], (3 * 1.0 + 2 * 4.0) / 5.0);
  EXPECT_DOUBLE_EQ(rep.trailing.at(0), 1.0);
  EXPECT_DOUBLE_EQ(rep.trailing.at(1), 0.4);
  EXPECT_NEAR(rep.theoretical_pmf.at(0), 0.419422, 5e-7);
  EXPECT_THROW(empirical_distribution(recs, RankColumn::S2, ClassKey::single(7)), UndefinedAverageError);
  EXPECT_THROW(empirical_distribution(recs, RankColumn::MW, ClassKey::all()), UndefinedAverageError);
  auto some = recs;
  some[0].mw_rank = 0;
  const auto mw = empirical_distribution(some, RankColumn::MW, ClassKey::all());
  EXPECT_EQ(mw.size, 1);
  EXPECT_EQ(mw.missing, 5);
}

TEST(Empirical, PmfsSumToOne) {
  for (const char* k : {"1", "2", "3", "5", "6", "7", "1,3", "5,7", "all"}) {
    const auto rep = empirical_distribution(computed_records(), RankColumn::S2, parse_class_key(k));
    double s = 0.0;
    for (const auto& [v, p] : rep.pmf) s += p;
    EXPECT_NEAR(s, 1.0, 1e-12) << k;
  }
}

TEST(Empirical, AverageRankCompare) {
  const auto a = average_rank_compare(computed_records(), ClassKey::high_odd());
  EXPECT_DOUBLE_EQ(a.theoretical, 1.3250);
  EXPECT_GT(a.empirical, 1.0);
  EXPECT_THROW(average_rank_compare(computed_records(), parse_class_key("1,5")), DomainError);
}

TEST(Empirical, ErrorNormalization) {
  const auto pts = error_normalization(computed_records(), 1, 1, {1000, 10000, 100000});
  ASSERT_EQ(pts.size(), 3U);
  double sum = 0.0;
  i64 n = 0;
  for (const auto& r : computed_records()) {
    if (r.D <= 10000 && r.D % 8 == 1) {
      sum += std::ldexp(1.0, r.s2);
      ++n;
    }
  }
  EXPECT_EQ(pts[1].class_size, n);
  EXPECT_NEAR(pts[1].delta, std::abs(sum - 3.0 * n), 1e-9);
  EXPECT_THROW(error_normalization(computed_records(), 1, 1, {100, 10}), DomainError);
}

TEST(Sha, Dimensions) {
  auto r = make_record(5);
  r.s2 = 1;
  r.mw_rank = 1;
  r.sel3_dim = 2;
  auto q = make_record(34);
  q.s2 = 2;
  q.mw_rank = 0;
  q.sel3_dim = 1;
  const auto d2 = sha_dim({r, q}, 2);
  EXPECT_EQ(d2[0].dim, 0);
  EXPECT_EQ(d2[1].dim, 2);
  const auto d3 = sha_dim({r, q}, 3);
  EXPECT_EQ(d3[0].dim, 1);
  EXPECT_TRUE(d3[0].anomalous);
  EXPECT_EQ(d3[1].dim, 1);
  auto bare = make_record(7);
  EXPECT_THROW(sha_dim({bare}, 2), SchemaError);
}

TEST(ChiSquare, GoldfeldCounts) {
  const auto c = chi_square_uniform({4280, 5720});
  EXPECT_NEAR(c.statistic, 207.36, 1e-9);
  EXPECT_EQ(c.dof, 1);
  EXPECT_LT(c.p_value, 1e-40);
  EXPECT_NEAR(c.p_value / boost::math::gamma_q(0.5, 0.5 * c.statistic), 1.0, 1e-12);
  const auto even = chi_square_uniform({5000, 5000});
  EXPECT_DOUBLE_EQ(even.statistic, 0.0);
  EXPECT_DOUBLE_EQ(even.p_value, 1.0);
  EXPECT_THROW(chi_square_uniform({5}), DomainError);
}

TEST(ChiSquare, IncompleteGammaAgainstBoost) {
  for (double a : {0.5, 1.0, 2.5, 7.0, 30.0}) {
    for (double x : {0.01, 0.3, 1.0, 4.0, 12.0, 60.0, 200.0}) {
      const double want = boost::math::gamma_q(a, x);
      if (want < 1e-300) continue;
      EXPECT_NEAR(gamma_q(a, x) / want, 1.0, 1e-12) << a << " " << x;
      EXPECT_NEAR(gamma_p(a, x), boost::math::gamma_p(a, x), 1e-14) << a << " " << x;
    }
  }
}

TEST(Goldfeld, ReportCounts) {
  std::vector<CurveRecord> recs;
  for (i64 D = 1; D <= 100; ++D) {
    auto r = make_record(D);
    if (D % 3 == 0) r.analytic_rank = 0;
    else if (D % 3 == 1) r.analytic_rank = 1;
    else if (D % 10 == 2) r.analytic_rank = 2;
    recs.push_back(r);
  }
  const auto rep = goldfeld_report(recs, RankColumn::Analytic, 10);
  EXPECT_EQ(rep.n0, 33);
  EXPECT_EQ(rep.n1, 34);
  EXPECT_EQ(rep.n2plus + rep.missing, 33);
  EXPECT_FALSE(rep.running.empty());
  EXPECT_THROW(goldfeld_report(recs, RankColumn::Analytic, 0), DomainError);
}

TEST(Resample, FullInclusionAndDeterminism) {
  const auto& recs = computed_records();
  const auto full = bernoulli_resample(recs, RankColumn::S2, 1.0, 3, 1);
  i64 zero = 0;
  for (const auto& r : recs) zero += r.s2 == 0;
  for (const auto& p : full.proportions) EXPECT_DOUBLE_EQ(*p, static_cast<double>(zero) / recs.size());
  const auto a = bernoulli_resample(recs, RankColumn::S2, 0.01, 50, 42);
  const auto b = bernoulli_resample(recs, RankColumn::S2, 0.01, 50, 42);
  EXPECT_EQ(a.proportions, b.proportions);
  EXPECT_EQ(a.histogram, b.histogram);
  EXPECT_THROW(bernoulli_resample(recs, RankColumn::S2, 0.0, 5, 1), DomainError);
}
