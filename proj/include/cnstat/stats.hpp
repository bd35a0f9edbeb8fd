#pragma once

/**
 * @file stats.hpp
 * @brief Rank distributions by residue class and the theoretical models they
 *        are compared against.
 *
 * Model values (Heath-Brown moments and pmf, trailing bound, Poonen-Rains,
 * Delaunay) are closed-form products. Infinite products stop at the first
 * factor within 1e-15 of 1 (or 64 terms for the 2-adic constant).
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cnstat/errors.hpp"
#include "cnstat/random.hpp"
#include "cnstat/record.hpp"
#include "cnstat/specfun.hpp"

namespace cnstat {

// =============================================================================
// Keys and columns
// =============================================================================

struct ClassKey {
  std::string name;
  std::set<int> residues;  // D mod 8; empty means every D

  bool contains(i64 D) const { return residues.empty() || residues.count(static_cast<int>(D % 8)) > 0; }

  static ClassKey all() { return {"all", {}}; }
  static ClassKey single(int h) {
    if (h != 1 && h != 2 && h != 3 && h != 5 && h != 6 && h != 7) {
      throw DomainError("ClassKey: residue " + std::to_string(h) + " is not a square-free class mod 8");
    }
    return {std::to_string(h), {h}};
  }
  static ClassKey low_odd() { return {"1,3", {1, 3}}; }
  static ClassKey high_odd() { return {"5,7", {5, 7}}; }
};

/// "all", a single residue "5", or a comma list such as "1,3".
inline ClassKey parse_class_key(const std::string& s) {
  if (s.empty() || s == "all") return ClassKey::all();
  ClassKey k;
  k.name = s;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string tok = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    int h = 0;
    try {
      h = std::stoi(tok);
    } catch (const std::exception&) {
      throw DomainError("ClassKey: cannot parse '" + s + "'");
    }
    k.residues.insert(*ClassKey::single(h).residues.begin());
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return k;
}

enum class RankColumn { S2, S3, MW, Analytic };

inline const char* to_string(RankColumn c) {
  switch (c) {
    case RankColumn::S2: return "s2";
    case RankColumn::S3: return "s3";
    case RankColumn::MW: return "mw";
    case RankColumn::Analytic: return "analytic";
  }
  return "s2";
}

inline RankColumn parse_rank_column(const std::string& s) {
  if (s == "s2") return RankColumn::S2;
  if (s == "s3") return RankColumn::S3;
  if (s == "mw") return RankColumn::MW;
  if (s == "analytic") return RankColumn::Analytic;
  throw DomainError("unknown rank column '" + s + "'");
}

inline std::optional<int> rank_value(const CurveRecord& r, RankColumn c) {
  switch (c) {
    case RankColumn::S2: return r.s2;
    case RankColumn::S3: return r.sel3_dim;
    case RankColumn::MW: return r.mw_rank;
    case RankColumn::Analytic: return r.analytic_rank;
  }
  return std::nullopt;
}

// =============================================================================
// Theoretical models
// =============================================================================

/// c_k = prod_{j=1}^k (1 + 2^j)
inline double hb_moment_constant(int k) {
  if (k < 1) throw DomainError("hb_moment_constant: k must be >= 1");
  double c = 1.0;
  for (int j = 1; j <= k; ++j) c *= 1.0 + std::ldexp(1.0, j);
  return c;
}

/// alpha = prod_{n=1}^{64} (1 + 2^-n)^-1
inline double hb_alpha() {
  double prod = 1.0;
  for (int n = 1; n <= 64; ++n) prod *= 1.0 + std::ldexp(1.0, -n);
  return 1.0 / prod;
}

/// alpha 2^r / prod_{j=1}^{r-1} (2j + 1)
inline double hb_rank_pmf(int r) {
  if (r < 0) throw DomainError("hb_rank_pmf: r must be >= 0");
  double den = 1.0;
  for (int j = 1; j <= r - 1; ++j) den *= 2.0 * j + 1.0;
  return hb_alpha() * std::ldexp(1.0, r) / den;
}

/// Variant alpha 2^r / prod_{j=1}^{r} (2^j + 1). Reported next to
/// hb_rank_pmf, never used as the model.
inline double hb_rank_pmf_displayed(int r) {
  if (r < 0) throw DomainError("hb_rank_pmf_displayed: r must be >= 0");
  double den = 1.0;
  for (int j = 1; j <= r; ++j) den *= std::ldexp(1.0, j) + 1.0;
  return hb_alpha() * std::ldexp(1.0, r) / den;
}

inline constexpr double kTrailingConstant = 1.7313;

/// 1.7313 * 2^{-(r^2 - r)/2}
inline double trailing_bound(int r) {
  if (r < 0) throw DomainError("trailing_bound: r must be >= 0");
  return kTrailingConstant * std::exp2(-0.5 * (static_cast<double>(r) * r - r));
}

struct AverageRankConstant {
  double text_value;   // c'_h as defined in prose
  double table_value;  // value used in the class comparison
  bool discrepancy;
};

inline AverageRankConstant average_rank_constant(int h) {
  switch (h) {
    case 1: return {1.2039, 1.2039, false};
    case 3: return {1.2039, 1.2309, true};
    case 5:
    case 7: return {1.3250, 1.3250, false};
    default: throw DomainError("average_rank_constant: h must be 1, 3, 5 or 7");
  }
}

/// (prod_{j>=0} (1 + 2^-j))^-1 prod_{j=1}^d 2 / (2^j - 1)
inline double pr_pmf(int d) {
  if (d < 0) throw DomainError("pr_pmf: d must be >= 0");
  double lead = 2.0;  // j = 0
  for (int j = 1; j <= 64; ++j) lead *= 1.0 + std::ldexp(1.0, -j);
  double v = 1.0 / lead;
  for (int j = 1; j <= d; ++j) v *= 2.0 / (std::ldexp(1.0, j) - 1.0);
  return v;
}

/// Leading product left uninverted; exceeds 1 at d = 0.
inline double pr_pmf_displayed(int d) {
  const double inv = pr_pmf(0);
  return pr_pmf(d) / (inv * inv);
}

/// prod_{i=1}^m (2^i + 1)
inline double pr_moment(int m) {
  if (m < 1) throw DomainError("pr_moment: m must be >= 1");
  double c = 1.0;
  for (int i = 1; i <= m; ++i) c *= std::ldexp(1.0, i) + 1.0;
  return c;
}

inline constexpr double kProductCutoff = 1e-15;

/// Prob(dim Sha[p] = 2n) for Mordell-Weil rank r in {0, 1}.
inline double delaunay_pmf(i64 p, int r, int n) {
  if (p < 2) throw DomainError("delaunay_pmf: p must be prime");
  if (r != 0 && r != 1) throw DomainError("delaunay_pmf: r must be 0 or 1");
  if (n < 0) throw DomainError("delaunay_pmf: n must be >= 0");
  const double P = static_cast<double>(p);
  double num = 1.0;
  for (int i = n + 1;; ++i) {
    const double t = std::pow(P, -(2.0 * r + 2.0 * i - 1.0));
    if (t < kProductCutoff) break;
    num *= 1.0 - t;
  }
  double den = 1.0;
  for (int i = 1; i <= n; ++i) den *= 1.0 - std::pow(P, -2.0 * i);
  return std::pow(P, -static_cast<double>(n) * (2.0 * r + 2.0 * n - 1.0)) * num / den;
}

/// lf(k, X) = (log log X)^{4^k} / (log X)^{1/4^k}
inline double log_factor(int k, double X) {
  if (k < 1) throw DomainError("log_factor: k must be >= 1");
  if (!(X > std::exp(1.0))) throw DomainError("log_factor: X must exceed e");
  const double q = std::pow(4.0, k);
  const double lx = std::log(X);
  return std::pow(std::log(lx), q) / std::pow(lx, 1.0 / q);
}

// =============================================================================
// Empirical distributions
// =============================================================================

struct DistributionReport {
  ClassKey key;
  RankColumn column = RankColumn::S2;
  i64 size = 0;     // records in the class carrying the column
  i64 missing = 0;  // records in the class without the column
  std::map<int, i64> counts;
  std::map<int, double> pmf;
  std::vector<double> moments;  // mean of base^{k rank}, k = 1..
  double mean = 0.0;
  std::map<int, double> trailing;  // P(rank >= r)
  std::map<int, double> theoretical_pmf;
  std::map<int, double> theoretical_trailing;
  std::vector<double> theoretical_moments;
};

namespace stats_detail {

// The parity of s2 allowed in a class key, when the key pins one.
inline std::optional<int> key_parity(const ClassKey& key) {
  if (key.residues.empty()) return std::nullopt;
  std::optional<int> par;
  for (int h : key.residues) {
    const int p = (h == 5 || h == 6 || h == 7) ? 1 : 0;
    if (par && *par != p) return std::nullopt;
    par = p;
  }
  return par;
}

}  // namespace stats_detail

inline DistributionReport empirical_distribution(const std::vector<CurveRecord>& records, RankColumn column,
                                                 const ClassKey& key, int max_moment = 3) {
  DistributionReport rep;
  rep.key = key;
  rep.column = column;
  const double base = column == RankColumn::S3 ? 3.0 : 2.0;
  std::vector<double> msum(static_cast<std::size_t>(max_moment), 0.0);
  i64 total = 0;
  for (const auto& r : records) {
    if (!key.contains(r.D)) continue;
    const auto v = rank_value(r, column);
    if (!v) {
      ++rep.missing;
      continue;
    }
    ++rep.counts[*v];
    total += *v;
    ++rep.size;
  }
  if (rep.size == 0) throw UndefinedAverageError("empirical_distribution: class '" + key.name + "' is empty");
  const double n = static_cast<double>(rep.size);
  for (const auto& [v, c] : rep.counts) {
    rep.pmf[v] = static_cast<double>(c) / n;
    for (int k = 1; k <= max_moment; ++k) {
      msum[static_cast<std::size_t>(k - 1)] += static_cast<double>(c) * std::pow(base, k * v);
    }
  }
  for (double m : msum) rep.moments.push_back(m / n);
  rep.mean = static_cast<double>(total) / n;
  i64 above = rep.size;
  const int top = rep.counts.rbegin()->first;
  for (int r = 0; r <= top; ++r) {
    rep.trailing[r] = static_cast<double>(above) / n;
    if (auto it = rep.counts.find(r); it != rep.counts.end()) above -= it->second;
  }
  if (column == RankColumn::S2) {
    for (int k = 1; k <= max_moment; ++k) rep.theoretical_moments.push_back(hb_moment_constant(k));
    if (const auto par = stats_detail::key_parity(key)) {
      for (int r = *par; r <= std::max(top, 5); r += 2) {
        rep.theoretical_pmf[r] = hb_rank_pmf(r);
        rep.theoretical_trailing[r] = trailing_bound(r);
      }
    }
  }
  return rep;
}

struct AverageRankComparison {
  ClassKey key;
  double empirical = 0.0;
  double theoretical = 0.0;
  double table_value = 0.0;
  bool discrepancy = false;
};

/// Empirical mean s(D) over an odd class key, paired with c'_h.
inline AverageRankComparison average_rank_compare(const std::vector<CurveRecord>& records, const ClassKey& key) {
  if (key.residues.empty()) throw DomainError("average_rank_compare: key must name odd classes");
  std::optional<AverageRankConstant> c;
  for (int h : key.residues) {
    const auto ch = average_rank_constant(h);
    if (c && c->text_value != ch.text_value) throw DomainError("average_rank_compare: key mixes 1,3 with 5,7");
    if (!c) c = ch;
    c->discrepancy = c->discrepancy || ch.discrepancy;
    if (key.residues.size() == 1) c->table_value = ch.table_value;
  }
  const auto rep = empirical_distribution(records, RankColumn::S2, key, 1);
  return {key, rep.mean, c->text_value, c->table_value, c->discrepancy};
}

struct NormalizedErrorPoint {
  i64 X;
  i64 class_size;
  double delta;
  double normalized;
};

/// Delta(X,k,h) / (X lf(k,X)) over an increasing grid. Records must be sorted by D.
inline std::vector<NormalizedErrorPoint> error_normalization(const std::vector<CurveRecord>& records, int k, int h,
                                                             const std::vector<i64>& grid) {
  const double ck = hb_moment_constant(k);
  std::vector<NormalizedErrorPoint> out;
  double sum = 0.0;
  i64 count = 0;
  std::size_t idx = 0;
  i64 prev = 0;
  for (i64 X : grid) {
    if (X <= prev) throw DomainError("error_normalization: grid must be increasing");
    prev = X;
    const double lf = log_factor(k, static_cast<double>(X));
    while (idx < records.size() && records[idx].D <= X) {
      const auto& r = records[idx++];
      if (r.D % 8 != h) continue;
      sum += std::ldexp(1.0, k * r.s2);
      ++count;
    }
    const double delta = std::abs(sum - ck * static_cast<double>(count));
    out.push_back({X, count, delta, delta / (static_cast<double>(X) * lf)});
  }
  return out;
}

// =============================================================================
// Sha dimensions
// =============================================================================

struct ShaDimEntry {
  i64 D;
  int dim;
  bool anomalous;  // odd or negative
};

/// dim Sha[p] = dim Sel_p - rank - dim E(Q)[p], with dim E(Q)[2] = 2 and
/// dim E(Q)[3] = 0. Every record must carry the Selmer and rank columns.
inline std::vector<ShaDimEntry> sha_dim(const std::vector<CurveRecord>& records, int p) {
  if (p != 2 && p != 3) throw DomainError("sha_dim: p must be 2 or 3");
  std::vector<ShaDimEntry> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.mw_rank) throw SchemaError("sha_dim: D=" + std::to_string(r.D) + " has no mw_rank");
    int dim = 0;
    if (p == 2) {
      dim = (r.s2 + 2) - *r.mw_rank - 2;
    } else {
      if (!r.sel3_dim) throw SchemaError("sha_dim: D=" + std::to_string(r.D) + " has no sel3_dim");
      dim = *r.sel3_dim - *r.mw_rank;
    }
    out.push_back({r.D, dim, dim < 0 || dim % 2 != 0});
  }
  return out;
}

// =============================================================================
// Goldfeld proportions
// =============================================================================

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 1;
  double p_value = 1.0;
};

/// Pearson chi-square of observed counts against equal expected counts.
inline ChiSquareResult chi_square_uniform(const std::vector<i64>& observed) {
  if (observed.size() < 2) throw DomainError("chi_square_uniform: need at least two cells");
  double total = 0.0;
  for (i64 o : observed) total += static_cast<double>(o);
  if (total <= 0.0) throw UndefinedAverageError("chi_square_uniform: no observations");
  const double e = total / static_cast<double>(observed.size());
  ChiSquareResult res;
  for (i64 o : observed) {
    const double d = static_cast<double>(o) - e;
    res.statistic += d * d / e;
  }
  res.dof = static_cast<int>(observed.size()) - 1;
  res.p_value = chi_square_sf(res.statistic, res.dof);
  return res;
}

struct RunningProportion {
  i64 D;
  i64 n;
  double rank0;
  double rank1;
};

struct GoldfeldReport {
  RankColumn column = RankColumn::Analytic;
  i64 n0 = 0;
  i64 n1 = 0;
  i64 n2plus = 0;
  i64 missing = 0;
  std::vector<RunningProportion> running;
  ChiSquareResult chi;
};

/// Counts of rank 0, 1, >= 2 over records (in the given order), running
/// proportions every `stride` ranked records, and chi-square of (N0, N1).
inline GoldfeldReport goldfeld_report(const std::vector<CurveRecord>& records, RankColumn column,
                                      i64 stride = 1000) {
  if (stride < 1) throw DomainError("goldfeld_report: stride must be >= 1");
  GoldfeldReport rep;
  rep.column = column;
  i64 seen = 0;
  for (const auto& r : records) {
    const auto v = rank_value(r, column);
    if (!v) {
      ++rep.missing;
      continue;
    }
    if (*v == 0) {
      ++rep.n0;
    } else if (*v == 1) {
      ++rep.n1;
    } else {
      ++rep.n2plus;
    }
    if (++seen % stride == 0) {
      rep.running.push_back({r.D, seen, static_cast<double>(rep.n0) / static_cast<double>(seen),
                             static_cast<double>(rep.n1) / static_cast<double>(seen)});
    }
  }
  if (rep.n0 + rep.n1 > 0) rep.chi = chi_square_uniform({rep.n0, rep.n1});
  return rep;
}

// =============================================================================
// Resampling
// =============================================================================

struct ResampleSummary {
  std::vector<std::optional<double>> proportions;  // nullopt: empty trial
  i64 empty_trials = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<i64> histogram;  // 20 equal bins over [0, 1]
};

/// Each trial keeps every ranked record independently with probability q and
/// records the rank-0 proportion of the kept sample.
inline ResampleSummary bernoulli_resample(const std::vector<CurveRecord>& records, RankColumn column,
                                          double inclusion_prob, int trials, std::uint64_t seed) {
  if (!(inclusion_prob > 0.0 && inclusion_prob <= 1.0)) {
    throw DomainError("bernoulli_resample: inclusion probability must be in (0, 1]");
  }
  if (trials < 1) throw DomainError("bernoulli_resample: trials must be >= 1");
  std::vector<int> ranks;
  for (const auto& r : records) {
    if (const auto v = rank_value(r, column)) ranks.push_back(*v);
  }
  Rng rng(seed);
  ResampleSummary out;
  out.histogram.assign(20, 0);
  double sum = 0.0;
  i64 filled = 0;
  for (int t = 0; t < trials; ++t) {
    i64 kept = 0;
    i64 zero = 0;
    for (int v : ranks) {
      if (inclusion_prob < 1.0 && rng.uniform() >= inclusion_prob) continue;
      ++kept;
      if (v == 0) ++zero;
    }
    if (kept == 0) {
      out.proportions.push_back(std::nullopt);
      ++out.empty_trials;
      continue;
    }
    const double prop = static_cast<double>(zero) / static_cast<double>(kept);
    out.proportions.push_back(prop);
    if (filled == 0) {
      out.min = out.max = prop;
    } else {
      out.min = std::min(out.min, prop);
      out.max = std::max(out.max, prop);
    }
    sum += prop;
    ++filled;
    ++out.histogram[std::min<std::size_t>(19, static_cast<std::size_t>(prop * 20.0))];
  }
  if (filled > 0) out.mean = sum / static_cast<double>(filled);
  return out;
}

}  // namespace cnstat
