// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Exit status is non-zero when any criterion fails.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "cnstat/data.hpp"
#include "cnstat/learn.hpp"
#include "cnstat/stats.hpp"

using namespace cnstat;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& s) { notes.push_back("     " + s); }
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

const PrimeTable& table() {
  static const PrimeTable t = build_prime_table(3000000);
  return t;
}

// ---------------------------------------------------------------------------

Outcome parity_200k() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto sf = enumerate_squarefree(200000, table());
  std::atomic<i64> bad{0};
  std::mutex mu;
  std::vector<i64> first_bad;
  parallel_chunks(sf.size(), default_workers(), [&](std::size_t i) {
    const i64 D = sf[i];
    const int s = D % 2 == 1 ? monsky_rank(D, table()) : selmer_rank_oracle(D, table()).s;
    if (s % 2 != expected_parity(D)) {
      ++bad;
      std::lock_guard<std::mutex> lk(mu);
      if (first_bad.size() < 5) first_bad.push_back(D);
    }
  });
  const double secs = seconds_since(t0);
  o.check(bad == 0, fmt("%zu square-free D <= 200000, %lld parity mismatches", sf.size(), static_cast<long long>(bad.load())));
  o.check(secs < 600.0, fmt("runtime %.1f s (limit 600 s)", secs));
  return o;
}

Outcome oracle_vs_matrix() {
  Outcome o;
  const auto t0 = Clock::now();
  std::vector<i64> odd;
  for (i64 D : enumerate_squarefree(10000, table())) {
    if (D % 2 == 1) odd.push_back(D);
  }
  std::atomic<i64> bad{0};
  parallel_chunks(odd.size(), default_workers(), [&](std::size_t i) {
    if (monsky_rank(odd[i], table()) != selmer_rank_oracle(odd[i], table()).s) ++bad;
  });
  const double secs = seconds_since(t0);
  o.check(bad == 0, fmt("%zu odd square-free D <= 10000, %lld mismatches", odd.size(), static_cast<long long>(bad.load())));
  o.check(secs < 1800.0, fmt("runtime %.1f s (limit 1800 s)", secs));
  return o;
}

Outcome cm_traces() {
  Outcome o;
  const auto t0 = Clock::now();
  i64 n = 0;
  i64 bad = 0;
  for (i64 D = 1; D <= 50; ++D) {
    for (i64 p : table().primes()) {
      if (p > 1000) break;
      if (p == 2 || D % p == 0) continue;
      ++n;
      bad += ap_twist(D, p) != ap_bruteforce(-D * D, 0, p);
    }
  }
  const double secs = seconds_since(t0);
  o.check(bad == 0, fmt("%lld (D, p) pairs, %lld mismatches", static_cast<long long>(n), static_cast<long long>(bad)));
  o.check(secs < 60.0, fmt("runtime %.2f s (limit 60 s)", secs));
  return o;
}

Outcome theory_tables() {
  Outcome o;
  const double hb[] = {0.419422, 0.838845, 0.559230, 0.223692, 0.063912, 0.014203};
  const double tr[] = {1.7313, 1.7313, 0.865650, 0.216413, 0.027052, 0.001691};
  for (int r = 0; r < 6; ++r) {
    o.check(std::abs(hb_rank_pmf(r) - hb[r]) < 5e-7, fmt("hb_rank_pmf(%d) = %.6f (ref %.6f)", r, hb_rank_pmf(r), hb[r]));
    o.check(std::abs(trailing_bound(r) - tr[r]) < 5e-7,
            fmt("trailing_bound(%d) = %.6f (ref %.6f)", r, trailing_bound(r), tr[r]));
  }
  o.check(hb_moment_constant(1) == 3.0 && hb_moment_constant(2) == 15.0,
          fmt("moment constants %.0f, %.0f", hb_moment_constant(1), hb_moment_constant(2)));
  o.check(std::abs(1.7313 * std::ldexp(1.0, -6) - 0.027052) < 5e-7, "1.7313 * 2^-6 = 0.027052");
  return o;
}

Outcome full_scale() {
  Outcome o;
  const auto t0 = Clock::now();
  const i64 X = 3000000;
  const auto sf = enumerate_squarefree(X, table());
  std::vector<std::int8_t> s(sf.size(), -1);
  parallel_chunks(sf.size(), default_workers(), [&](std::size_t i) {
    if (sf[i] % 2 == 1) s[i] = static_cast<std::int8_t>(monsky_rank(sf[i], table()));
  });
  std::map<int, i64> size;
  std::map<int, double> total;
  i64 zero13 = 0;
  i64 n13 = 0;
  for (std::size_t i = 0; i < sf.size(); ++i) {
    const int h = static_cast<int>(sf[i] % 8);
    ++size[h];
    if (s[i] < 0) continue;
    total[h] += s[i];
    if (h == 1 || h == 3) {
      ++n13;
      zero13 += s[i] == 0;
    }
  }
  const std::map<int, i64> ref_sizes = {{1, 303961}, {2, 303967}, {3, 303961}, {5, 303959}, {6, 303962}, {7, 303963}};
  for (const auto& [h, want] : ref_sizes) {
    o.check(size[h] == want, fmt("class %d size %lld (ref %lld)", h, static_cast<long long>(size[h]),
                                 static_cast<long long>(want)));
  }
  const double p0 = static_cast<double>(zero13) / static_cast<double>(n13);
  o.check(std::abs(p0 - 0.454391) <= 1e-3, fmt("P(s=0 | D = 1,3 mod 8) = %.6f (ref 0.454391)", p0));
  const std::map<int, double> ref_means = {{1, 1.4511}, {3, 0.8356}, {5, 1.2961}, {7, 1.2830}};
  for (const auto& [h, want] : ref_means) {
    const double avg = total[h] / static_cast<double>(size[h]);
    o.check(std::abs(avg - want) <= 2e-3, fmt("class %d average s = %.4f (ref %.4f)", h, avg, want));
  }
  o.note(fmt("odd D by the matrix route, runtime %.1f s", seconds_since(t0)));
  return o;
}

Outcome normalizations(const std::vector<CurveRecord>& records) {
  Outcome o;
  double s = 0.0;
  for (int d = 0; d <= 30; ++d) s += pr_pmf(d);
  o.check(std::abs(s - 1.0) <= 1e-6, fmt("sum pr_pmf(0..30) = %.12f", s));
  for (i64 p : {2, 3}) {
    for (int r : {0, 1}) {
      double t = 0.0;
      for (int n = 0; n <= 60; ++n) t += delaunay_pmf(p, r, n);
      o.check(std::abs(t - 1.0) <= 1e-4, fmt("sum delaunay_pmf(%lld, %d, .) = %.10f", static_cast<long long>(p), r, t));
    }
  }
  double worst = 0.0;
  int reports = 0;
  for (const char* key : {"1", "2", "3", "5", "6", "7", "1,3", "5,7", "all"}) {
    const auto rep = empirical_distribution(records, RankColumn::S2, parse_class_key(key));
    double t = 0.0;
    for (const auto& [r, v] : rep.pmf) t += v;
    worst = std::max(worst, std::abs(t - 1.0));
    ++reports;
  }
  o.check(worst <= 1e-12, fmt("%d empirical pmfs (D <= 100000), max |sum - 1| = %.2e", reports, worst));
  return o;
}

Outcome goldfeld() {
  Outcome o;
  const auto a = chi_square_uniform({4280, 5720});
  o.check(std::abs(a.statistic - 207.36) <= 0.01, fmt("chi-square (4280, 5720) = %.4f", a.statistic));
  o.check(a.p_value < 1e-40, fmt("p-value %.3e < 1e-40", a.p_value));
  const auto b = chi_square_uniform({5000, 5000});
  o.check(b.p_value == 1.0, fmt("(5000, 5000) p-value = %.17g", b.p_value));
  return o;
}

Outcome lfunction_bsd() {
  Outcome o;
  const auto b1 = normalized_bsd(1, table(), 0);
  o.check(std::abs(b1.normalized - 1.0) <= 1e-3, fmt("normalized BSD value of E_1 = %.9f", b1.normalized));
  const double om1 = real_period(1.0);
  double worst = 0.0;
  for (i64 D = 1; D <= 10000; ++D) {
    worst = std::max(worst, std::abs(real_period(static_cast<double>(D)) * std::sqrt(static_cast<double>(D)) - om1) / om1);
  }
  o.check(worst <= 1e-9, fmt("max relative |Omega(E_D) sqrt(D) - Omega(E_1)| = %.2e for D <= 10000", worst));
  const double tol = 1e-10;
  double lmax = 0.0;
  i64 n = 0;
  for (i64 D : enumerate_squarefree(200, table())) {
    const int h = static_cast<int>(D % 8);
    if (h < 5) continue;
    lmax = std::max(lmax, std::abs(l_value_at_1(D, tol).value));
    ++n;
  }
  o.check(lmax < tol, fmt("%lld D = 5,6,7 mod 8 up to 200, max |L(1)| = %.2e (tol %.0e)", static_cast<long long>(n), lmax, tol));
  i64 checked = 0;
  i64 exceptions = 0;
  for (i64 D : enumerate_squarefree(500, table())) {
    const auto b = normalized_bsd(D, table(), selmer_rank(D, table()).s);
    ++checked;
    exceptions += !b.smith_holds.value_or(false);
  }
  o.check(exceptions == 0, fmt("Smith biconditional: %lld D <= 500, %lld exceptions", static_cast<long long>(checked),
                               static_cast<long long>(exceptions)));
  return o;
}

// Escalates the search height until a point is found or the last height fails.
CongruenceStatus certify_escalating(i64 D, const SelmerGroup& g, i64& used) {
  CongruenceStatus st;
  for (i64 H : {60, 250, 1000, 4000}) {
    used = H;
    st = certify_status(D, g, H, table());
    if (st.status != Congruence::Unknown) break;
  }
  return st;
}

Outcome certification() {
  Outcome o;
  for (i64 D : {5, 6, 7, 13, 14, 15, 21, 22, 23}) {
    const auto g = selmer_rank_oracle(D, table());
    i64 H = 0;
    const auto st = certify_escalating(D, g, H);
    bool exact = false;
    std::string pt;
    if (st.witness) {
      exact = st.witness->on_curve(D) && !st.witness->is_torsion(D);
      pt = "x = " + st.witness->x_num.str() + "/" + st.witness->x_den.str();
    }
    o.check(st.status == Congruence::CongruentCertified && exact,
            fmt("D = %lld: %s (s = %d, H = %lld) %s", static_cast<long long>(D), to_string(st.status), g.s,
                static_cast<long long>(H), pt.c_str()));
  }
  for (i64 D : {1, 2, 3, 10, 11, 17, 19, 26}) {
    const auto g = selmer_rank_oracle(D, table());
    const auto st = certify_status(D, g, 1, table());
    o.check(st.status == Congruence::NoncongruentCertified,
            fmt("D = %lld: %s (s = %d)", static_cast<long long>(D), to_string(st.status), g.s));
  }
  i64 n = 0;
  i64 bad = 0;
  for (i64 p : table().primes()) {
    if (p > 5000) break;
    if (p % 8 != 3) continue;
    ++n;
    bad += certify_status(p, selmer_rank(p, table()), 1, table()).status != Congruence::NoncongruentCertified;
  }
  o.check(bad == 0, fmt("%lld primes = 3 mod 8 up to 5000, %lld not certified", static_cast<long long>(n),
                        static_cast<long long>(bad)));
  return o;
}

Outcome frobenius() {
  Outcome o;
  const auto quad = TwistFamilySpec::quadratic();
  i64 nonzero = 0;
  i64 tried = 0;
  for (std::size_t n = 1; n <= 200; ++n) {
    if (table().nth_prime(n) % 4 != 3) continue;
    ++tried;
    nonzero += frob_average(n, 100000, quad, table()) != 0.0;
  }
  o.check(nonzero == 0, fmt("f_X(n) at X = 1e5 is exactly 0 for all %lld primes = 3 mod 4 among p_1..p_200",
                            static_cast<long long>(tried)));
  const double f3 = frob_average(37, 1000, quad, table());
  const double f6 = frob_average(37, 1000000, quad, table());
  o.check(std::abs(f6) < 0.05 && std::abs(f6) < std::abs(f3),
          fmt("p_37 = %lld: f_1e3 = %.6f, f_1e6 = %.6f", static_cast<long long>(table().nth_prime(37)), f3, f6));
  i64 viol = 0;
  i64 pts = 0;
  for (i64 p : table().primes()) {
    if (p > 100) break;
    if (p == 2) continue;
    const auto series = legendre_running_series(p, 100000);
    for (std::size_t i = 0; i < series.size(); ++i) {
      const double n = static_cast<double>(i + 1);
      ++pts;
      viol += std::abs(series[i]) > (static_cast<double>(p) - 1.0) / (2.0 * n) + 1e-15;
    }
  }
  o.check(viol == 0, fmt("|C_n(p)| <= (p-1)/(2n): %lld points, %lld violations", static_cast<long long>(pts),
                         static_cast<long long>(viol)));
  const double cub = frob_average(37, 100000, TwistFamilySpec::cubic(), table());
  const double qua = frob_average(37, 100000, TwistFamilySpec::quartic(), table());
  o.check(std::abs(cub) < 0.1 && std::abs(qua) < 0.1, fmt("p = 157, X = 1e5: cubic %.6f, quartic %.6f", cub, qua));
  return o;
}

LabeledDataset blobs(std::uint64_t seed, std::size_t n, double gap) {
  Rng rng(seed);
  LabeledDataset ds;
  ds.feature_names = {"x", "y"};
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double c = label ? gap : -gap;
    ds.X.push_back({c + rng.normal(), c + rng.normal()});
    ds.y.push_back(label);
    ds.ids.push_back(static_cast<i64>(i + 1));
    (i % 5 == 4 ? ds.test : ds.train).push_back(i);
  }
  return ds;
}

Outcome learning() {
  Outcome o;
  const auto m = metrics_from_confusion({{{40, 10}, {20, 30}}});
  const bool ident = m.accuracy == 0.7 && m.precision == 0.75 && m.recall == 0.6 &&
                     m.f1 == 2.0 * m.precision * m.recall / (m.precision + m.recall);
  o.check(ident, fmt("hand confusion [[40,10],[20,30]]: acc %.2f prec %.2f rec %.2f f1 %.6f", m.accuracy, m.precision,
                     m.recall, m.f1));
  const auto ds = blobs(7, 2000, 2.0);
  const auto lm = train_logistic(ds, 0.1, 500, 11);
  const auto tm = train_tree(ds, 6, 20);
  const double la = evaluate(lm, ds).accuracy;
  const double ta = evaluate(tm, ds).accuracy;
  o.check(la >= 0.95 && ta >= 0.95, fmt("separable blobs: logistic %.4f, tree %.4f", la, ta));
  const auto lm2 = train_logistic(ds, 0.1, 500, 11);
  const bool same = lm.weights.size() == lm2.weights.size() &&
                    std::memcmp(lm.weights.data(), lm2.weights.data(), lm.weights.size() * sizeof(double)) == 0 &&
                    std::memcmp(&lm.bias, &lm2.bias, sizeof(double)) == 0 &&
                    std::memcmp(lm.loss_history.data(), lm2.loss_history.data(),
                                lm.loss_history.size() * sizeof(double)) == 0;
  o.check(same, "fixed-seed logistic retrain is byte-identical");

  const char* labels = std::getenv("CNSTAT_LABELS");
  if (!labels) {
    o.note("conditional accuracy: SKIP (set CNSTAT_LABELS to a D,mw_rank file covering D <= 1e6)");
    return o;
  }
  const i64 X = 1000000;
  GenerateOptions opt;
  opt.even_matrix = true;
  auto records = generate_records(X, opt, table()).records;
  const auto ing = ingest_csv(std::string(labels), IngestSchema::identity({"mw_rank"}));
  auto merged = merge_and_validate(records, ing);
  FeatureSpec spec;
  spec.residues = true;
  const auto lds = build_features(merged.records, spec, 42, &table());
  const double acc = evaluate(train_tree(lds, 8, 20), lds).accuracy;
  o.check(acc >= 0.90, fmt("conditional: residue-feature tree accuracy %.4f on %zu test rows", acc, lds.test.size()));
  return o;
}

Outcome pca_checks(const std::vector<CurveRecord>& bsd_records) {
  Outcome o;
  std::vector<std::vector<double>> X;
  for (const auto& r : bsd_records) {
    if (!r.regulator) continue;
    X.push_back({4.0, *r.regulator, *r.l1, *r.omega_period, static_cast<double>(*r.tamagawa)});
  }
  const auto res = pca(X, 5);
  double sum = 0.0;
  for (double e : res.eigenvalues) sum += e;
  const double rel = std::abs(sum - res.total_variance) / res.total_variance;
  o.check(rel <= 1e-8, fmt("%zu rank-0 curves: eigenvalue sum vs total variance, relative %.2e", X.size(), rel));
  double ortho = 0.0;
  for (std::size_t i = 0; i < res.components.size(); ++i) {
    for (std::size_t j = 0; j < res.components.size(); ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < res.components[i].size(); ++k) d += res.components[i][k] * res.components[j][k];
      ortho = std::max(ortho, std::abs(d - (i == j ? 1.0 : 0.0)));
    }
  }
  o.check(ortho <= 1e-10, fmt("orthonormality max error %.2e", ortho));
  const auto back = pca_reconstruct(res);
  double rt = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    for (std::size_t k = 0; k < X[i].size(); ++k) {
      rt = std::max(rt, std::abs(back[i][k] - X[i][k]));
      scale = std::max(scale, std::abs(X[i][k]));
    }
  }
  o.check(rt <= 1e-8 * std::max(1.0, scale), fmt("full-rank round trip max error %.2e (scale %.1f)", rt, scale));
  return o;
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  (void)table();
  GenerateOptions opt;
  const auto records = generate_records(100000, opt, table()).records;
  GenerateOptions bopt;
  bopt.lfunction = true;
  const auto bsd_records = generate_records(2000, bopt, table()).records;

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"parity of s(D) for D <= 200000", parity_200k},
      {"oracle equals matrix for odd D <= 10000", oracle_vs_matrix},
      {"CM trace formula", cm_traces},
      {"theoretical tables", theory_tables},
      {"full scale at X = 3e6", full_scale},
      {"normalizations", [&] { return normalizations(records); }},
      {"Goldfeld chi-square", goldfeld},
      {"L-function and BSD", lfunction_bsd},
      {"congruence certification", certification},
      {"Frobenius averages", frobenius},
      {"classifiers", learning},
      {"PCA", [&] { return pca_checks(bsd_records); }},
  };
  int failed = 0;
  int idx = 0;
  for (const auto& [name, fn] : criteria) {
    ++idx;
    const auto c0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.notes.push_back(std::string("FAIL exception: ") + e.what());
    }
    failed += !o.pass;
    std::printf("CRITERION %2d %s  %s (%.1f s)\n", idx, o.pass ? "PASS" : "FAIL", name, seconds_since(c0));
    for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed, total %.1f s\n", static_cast<int>(criteria.size()) - failed, criteria.size(),
              seconds_since(t0));
  return failed == 0 ? 0 : 1;
}
