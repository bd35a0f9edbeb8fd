#include "cnstat/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cnstat/arith.hpp"
#include "cnstat/data.hpp"
#include "cnstat/descent.hpp"
#include "cnstat/errors.hpp"
#include "cnstat/frobenius.hpp"
#include "cnstat/learn.hpp"
#include "cnstat/lfunction.hpp"
#include "cnstat/stats.hpp"

namespace cnstat::cli {

namespace {

using json = nlohmann::ordered_json;

struct RunConfig {
  std::string subcommand;
  i64 max = 0;
  std::string class_key = "all";
  std::optional<std::uint64_t> seed;
  unsigned workers = default_workers();
  std::string in;
  std::string out;
  std::string format;  // per-subcommand default when empty
  std::optional<double> tol;
  int depth_bump = 0;
  bool no_timestamp = false;

  // subcommand specific
  bool even_matrix = false;
  i64 height = 0;
  i64 chunk = 20000;
  std::size_t budget_chunks = 0;
  bool resume = false;
  std::size_t primes = 1000;
  std::optional<std::size_t> n;
  std::string family = "quadratic";
  std::string table = "hb-pmf";
  std::string column = "s2";
  i64 stride = 1000;
  std::vector<i64> counts;
  double inclusion = 0.5;
  int trials = 100;
  std::string features = "residues";
  std::string model = "both";
  int epochs = 500;
  double lr = 0.1;
  int max_depth = 8;
  std::size_t min_leaf = 20;
  std::size_t k = 2;
  std::string source;
  std::string schema;
};

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

json header(const RunConfig& c) {
  json j;
  j["command"] = c.subcommand;
  if (!c.no_timestamp) j["generated"] = timestamp();
  return j;
}

/// Writes a JSON document to --out when given, otherwise to `out`.
void emit_json(const RunConfig& c, const json& j, std::ostream& out) {
  if (!c.out.empty() && (c.format == "json")) {
    std::ofstream os(c.out, std::ios::binary);
    if (!os) throw DataError("cannot open " + c.out);
    os << j.dump(2) << '\n';
  } else {
    out << j.dump(2) << '\n';
  }
}

std::ofstream open_out(const std::string& path, bool append = false) {
  std::ofstream os(path, append ? std::ios::binary | std::ios::app : std::ios::binary);
  if (!os) throw DataError("cannot open " + path);
  return os;
}

void write_timestamp_line(const RunConfig& c, std::ostream& os) {
  if (!c.no_timestamp) os << "# generated " << timestamp() << '\n';
}

PrimeTable table_for(i64 X, i64 floor_limit = 1000) {
  const i64 lim = std::max<i64>(X, floor_limit);
  if (lim > static_cast<i64>(UINT32_MAX)) throw RangeError("bound too large for the sieve");
  return build_prime_table(static_cast<std::uint32_t>(lim));
}

void require_max(const RunConfig& c) {
  if (c.max < 1) throw ConfigurationError(c.subcommand + ": --max must be given and >= 1");
}

void require_in(const RunConfig& c) {
  if (c.in.empty()) throw ConfigurationError(c.subcommand + ": --in is required");
}

std::uint64_t require_seed(const RunConfig& c) {
  if (!c.seed) throw ConfigurationError(c.subcommand + ": --seed is required for this run");
  return *c.seed;
}

template <class K, class V>
json map_json(const std::map<K, V>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

json violations_json(const std::vector<Violation>& v) {
  json arr = json::array();
  for (const auto& x : v) arr.push_back({{"D", x.D}, {"kind", x.kind}, {"detail", x.detail}});
  return arr;
}

// -----------------------------------------------------------------------------
// sieve
// -----------------------------------------------------------------------------

int cmd_sieve(const RunConfig& c, std::ostream& out) {
  require_max(c);
  const auto table = table_for(c.max);
  const auto sf = enumerate_squarefree(c.max, table);
  const ClassKey key = parse_class_key(c.class_key);
  if (c.format == "csv") {
    if (c.out.empty()) throw ConfigurationError("sieve: --format csv needs --out");
    auto os = open_out(c.out);
    write_timestamp_line(c, os);
    os << "D,residue8,omega\n";
    for (i64 D : sf) {
      if (key.contains(D)) os << D << ',' << D % 8 << ',' << factor(D, table).omega << '\n';
    }
  }
  std::map<int, i64> classes;
  for (i64 D : sf) ++classes[static_cast<int>(D % 8)];
  json j = header(c);
  j["max"] = c.max;
  j["count"] = sf.size();
  j["classes"] = map_json(classes);
  if (c.format != "csv") emit_json(c, j, out);
  else out << j.dump(2) << '\n';
  return kExitOk;
}

// -----------------------------------------------------------------------------
// selmer
// -----------------------------------------------------------------------------

int cmd_selmer(const RunConfig& c, std::ostream& out) {
  require_max(c);
  if (c.out.empty()) throw ConfigurationError("selmer: --out is required");
  const std::string token_path = c.out + ".resume";
  GenerateOptions opt;
  opt.workers = c.workers;
  opt.chunk = c.chunk;
  opt.max_chunks = c.budget_chunks;
  opt.even_matrix = c.even_matrix;
  opt.search_height = c.height;
  opt.oracle.depth_bump = c.depth_bump;
  if (c.resume) {
    std::ifstream ts(token_path);
    if (!(ts >> opt.start)) throw ConfigurationError("selmer: --resume but no readable token at " + token_path);
  }
  const auto table = table_for(c.max);
  const GenerateResult res = generate_records(c.max, opt, table);
  {
    auto os = open_out(c.out, c.resume);
    if (!c.resume) {
      write_timestamp_line(c, os);
      write_records(os, {}, curves_columns());
    }
    for (const auto& r : res.records) os << record_row(r, curves_columns()) << '\n';
  }
  if (res.complete) {
    std::filesystem::remove(token_path);
  } else {
    std::ofstream ts(token_path);
    ts << res.resume_from << '\n';
  }
  std::vector<Violation> viol;
  std::map<int, i64> dist;
  for (const auto& r : res.records) {
    validate_record(r, viol);
    ++dist[r.s2];
  }
  json j = header(c);
  j["max"] = c.max;
  j["first_D"] = opt.start;
  j["records"] = res.records.size();
  j["complete"] = res.complete;
  if (!res.complete) j["resume_from"] = res.resume_from;
  j["s2_counts"] = map_json(dist);
  j["violations"] = violations_json(viol);
  out << j.dump(2) << '\n';
  return viol.empty() ? kExitOk : kExitValidation;
}

// -----------------------------------------------------------------------------
// traces
// -----------------------------------------------------------------------------

int cmd_traces(const RunConfig& c, std::ostream& out) {
  require_max(c);
  if (c.n) {
    // Average of a_{p_n} over square-free D <= max, at decades up to max.
    const auto fam = twist_family(c.family);
    const auto table = table_for(c.max, 200000);
    std::vector<i64> grid;
    for (i64 x = 1000; x < c.max; x *= 10) grid.push_back(x);
    grid.push_back(c.max);
    const ClassKey key = parse_class_key(c.class_key);
    json j = header(c);
    j["family"] = c.family;
    j["n"] = *c.n;
    j["prime"] = table.nth_prime(*c.n);
    json curve = json::array();
    if (key.residues.empty()) {
      for (const auto& pt : frob_decay_curve(*c.n, grid, fam, table)) curve.push_back({{"X", pt.X}, {"value", pt.value}});
    } else {
      for (i64 X : grid) {
        const double v = frob_average(*c.n, X, fam, table, [&](i64 D) { return key.contains(D); });
        curve.push_back({{"X", X}, {"value", v}});
      }
    }
    j["class"] = key.name;
    j["averages"] = curve;
    emit_json(c, j, out);
    return kExitOk;
  }
  if (c.out.empty()) throw ConfigurationError("traces: --out is required (or --n for averages)");
  const auto table = table_for(c.max, 200000);
  if (c.primes > table.primes().size()) throw RangeError("traces: --primes beyond the sieve");
  const auto sf = enumerate_squarefree(c.max, table);
  auto os = open_out(c.out);
  write_timestamp_line(c, os);
  os << 'D';
  for (std::size_t i = 1; i <= c.primes; ++i) os << ",a_" << table.nth_prime(i);
  os << '\n';
  for (i64 D : sf) {
    const auto tv = trace_vector(D, c.primes, table);
    os << D;
    for (i64 a : tv.a) os << ',' << a;
    os << '\n';
  }
  std::size_t zero_cols = 0;
  for (std::size_t i = 1; i <= c.primes; ++i) zero_cols += table.nth_prime(i) % 4 == 3;
  json j = header(c);
  j["records"] = sf.size();
  j["primes"] = c.primes;
  j["columns_identically_zero"] = zero_cols;
  out << j.dump(2) << '\n';
  return kExitOk;
}

// -----------------------------------------------------------------------------
// stats
// -----------------------------------------------------------------------------

json distribution_json(const DistributionReport& r) {
  json j;
  j["class"] = r.key.name;
  j["column"] = to_string(r.column);
  j["size"] = r.size;
  j["missing"] = r.missing;
  j["counts"] = map_json(r.counts);
  j["empirical_pmf"] = map_json(r.pmf);
  j["theoretical_pmf"] = map_json(r.theoretical_pmf);
  j["empirical_trailing"] = map_json(r.trailing);
  j["theoretical_trailing"] = map_json(r.theoretical_trailing);
  j["mean"] = r.mean;
  j["moments"] = r.moments;
  j["theoretical_moments"] = r.theoretical_moments;
  return j;
}

int cmd_stats(const RunConfig& c, std::ostream& out) {
  json j = header(c);
  j["table"] = c.table;
  if (c.table == "pr") {
    json rows = json::object();
    for (int d = 0; d <= 10; ++d) rows[std::to_string(d)] = pr_pmf(d);
    j["pmf"] = rows;
    emit_json(c, j, out);
    return kExitOk;
  }
  if (c.table == "delaunay") {
    json rows = json::array();
    for (i64 p : {2, 3}) {
      for (int r : {0, 1}) {
        json pm = json::object();
        for (int n = 0; n <= 5; ++n) pm[std::to_string(n)] = delaunay_pmf(p, r, n);
        rows.push_back({{"p", p}, {"r", r}, {"pmf", pm}});
      }
    }
    j["rows"] = rows;
    emit_json(c, j, out);
    return kExitOk;
  }
  require_in(c);
  const auto records = load_records(c.in);
  const RankColumn column = parse_rank_column(c.column);
  if (c.table == "hb-pmf" || c.table == "trailing") {
    const ClassKey key = parse_class_key(c.class_key == "all" ? "1,3" : c.class_key);
    j["report"] = distribution_json(empirical_distribution(records, column, key));
  } else if (c.table == "average") {
    json rows = json::array();
    for (const char* k : {"1", "3", "5", "7", "1,3", "5,7"}) {
      const auto a = average_rank_compare(records, parse_class_key(k));
      rows.push_back({{"class", a.key.name},
                      {"empirical", a.empirical},
                      {"theoretical", a.theoretical},
                      {"table_value", a.table_value},
                      {"discrepancy", a.discrepancy}});
    }
    j["rows"] = rows;
  } else if (c.table == "classes") {
    std::map<int, i64> size;
    std::map<int, double> mean;
    for (const auto& r : records) {
      ++size[r.residue8];
      mean[r.residue8] += r.s2;
    }
    for (auto& [h, m] : mean) m /= static_cast<double>(size[h]);
    j["sizes"] = map_json(size);
    j["mean_s2"] = map_json(mean);
  } else if (c.table == "resample") {
    const auto s = bernoulli_resample(records, column, c.inclusion, c.trials, require_seed(c));
    j["trials"] = c.trials;
    j["inclusion"] = c.inclusion;
    j["empty_trials"] = s.empty_trials;
    j["mean"] = s.mean;
    j["min"] = s.min;
    j["max"] = s.max;
    j["histogram"] = s.histogram;
  } else if (c.table == "sha") {
    json rows = json::array();
    i64 anomalies = 0;
    for (const auto& e : sha_dim(records, 2)) {
      if (e.anomalous) {
        ++anomalies;
        rows.push_back({{"D", e.D}, {"dim", e.dim}});
      }
    }
    j["anomalies"] = anomalies;
    j["anomalous"] = rows;
  } else {
    throw ConfigurationError("stats: unknown --table '" + c.table + "'");
  }
  emit_json(c, j, out);
  return kExitOk;
}

// -----------------------------------------------------------------------------
// goldfeld
// -----------------------------------------------------------------------------

int cmd_goldfeld(const RunConfig& c, std::ostream& out) {
  json j = header(c);
  if (!c.counts.empty()) {
    const auto chi = chi_square_uniform(c.counts);
    j["counts"] = c.counts;
    j["statistic"] = chi.statistic;
    j["dof"] = chi.dof;
    j["p_value"] = chi.p_value;
    emit_json(c, j, out);
    return kExitOk;
  }
  require_in(c);
  const auto records = load_records(c.in);
  const auto rep = goldfeld_report(records, parse_rank_column(c.column), c.stride);
  j["column"] = to_string(rep.column);
  j["rank0"] = rep.n0;
  j["rank1"] = rep.n1;
  j["rank2plus"] = rep.n2plus;
  j["missing"] = rep.missing;
  j["statistic"] = rep.chi.statistic;
  j["p_value"] = rep.chi.p_value;
  json run = json::array();
  for (const auto& r : rep.running) run.push_back({{"D", r.D}, {"n", r.n}, {"rank0", r.rank0}, {"rank1", r.rank1}});
  j["running"] = run;
  emit_json(c, j, out);
  return kExitOk;
}

// -----------------------------------------------------------------------------
// bsd
// -----------------------------------------------------------------------------

int cmd_bsd(const RunConfig& c, std::ostream& out) {
  require_max(c);
  const auto table = table_for(c.max);
  const auto sf = enumerate_squarefree(c.max, table);
  const double tol = c.tol.value_or(1e-9);
  std::vector<CurveRecord> rows(sf.size());
  parallel_chunks(sf.size(), c.workers, [&](std::size_t i) {
    const i64 D = sf[i];
    CurveRecord r = make_record(D);
    r.omega = factor(D, table).omega;
    const SelmerGroup g = selmer_rank(D, table);
    r.s2 = g.s;
    r.s2_method = to_string(g.method);
    const BSDParams b = normalized_bsd(D, table, g.s, tol);
    r.omega_period = b.omega;
    r.l1 = b.l1;
    r.tamagawa = b.tamagawa;
    r.normalized_bsd = b.normalized;
    r.l_bsd_odd = b.l_bsd_odd;
    rows[i] = std::move(r);
  });
  std::map<i64, i64> hist;
  json failures = json::array();
  for (const auto& r : rows) {
    ++hist[std::llround(*r.normalized_bsd)];
    if (*r.l_bsd_odd != (r.s2 == 0)) {
      failures.push_back({{"D", r.D}, {"s2", r.s2}, {"normalized_bsd", *r.normalized_bsd}});
    }
  }
  if (!c.out.empty()) {
    auto os = open_out(c.out);
    write_timestamp_line(c, os);
    write_records(os, rows, bsd_columns());
  }
  json j = header(c);
  j["max"] = c.max;
  j["records"] = rows.size();
  j["rounded_histogram"] = map_json(hist);
  j["smith_failures"] = failures;
  out << j.dump(2) << '\n';
  return failures.empty() ? kExitOk : kExitValidation;
}

// -----------------------------------------------------------------------------
// ml, pca
// -----------------------------------------------------------------------------

FeatureSpec parse_features(const std::string& s, std::size_t primes) {
  FeatureSpec spec;
  spec.trace_primes = primes;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "residues") spec.residues = true;
    else if (tok == "bsd") spec.bsd = true;
    else if (tok == "selmer") spec.selmer = true;
    else if (tok == "traces") spec.traces = true;
    else throw ConfigurationError("ml: unknown feature group '" + tok + "'");
  }
  return spec;
}

json metrics_json(const MetricsReport& m) {
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"roc_auc", m.roc_auc},
          {"confusion", {{m.confusion[0][0], m.confusion[0][1]}, {m.confusion[1][0], m.confusion[1][1]}}}};
}

void metrics_text(const std::string& name, const MetricsReport& m, std::ostream& out) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s accuracy %.4f  precision %.4f  recall %.4f  f1 %.4f  auc %.4f\n",
                name.c_str(), m.accuracy, m.precision, m.recall, m.f1, m.roc_auc);
  out << buf;
  std::snprintf(buf, sizeof buf, "%-10s confusion [[%lld, %lld], [%lld, %lld]]\n", "",
                static_cast<long long>(m.confusion[0][0]), static_cast<long long>(m.confusion[0][1]),
                static_cast<long long>(m.confusion[1][0]), static_cast<long long>(m.confusion[1][1]));
  out << buf;
}

int cmd_ml(const RunConfig& c, std::ostream& out) {
  require_in(c);
  const std::uint64_t seed = require_seed(c);
  const auto records = load_records(c.in);
  const FeatureSpec spec = parse_features(c.features, c.primes);
  std::optional<PrimeTable> table;
  if (spec.traces) table = build_prime_table(200000);
  const auto ds = build_features(records, spec, seed, table ? &*table : nullptr);
  json j = header(c);
  j["features"] = c.features;
  j["seed"] = seed;
  j["train_size"] = ds.train.size();
  j["test_size"] = ds.test.size();
  j["models_omitted"] = {"random_forest", "gradient_boosting", "xgboost"};
  json models = json::object();
  std::vector<std::pair<std::string, MetricsReport>> reports;
  if (c.model == "logistic" || c.model == "both") {
    const auto m = train_logistic(ds, c.lr, c.epochs, seed);
    reports.emplace_back("logistic", evaluate(m, ds));
  }
  if (c.model == "tree" || c.model == "both") {
    const auto m = train_tree(ds, c.max_depth, c.min_leaf);
    reports.emplace_back("tree", evaluate(m, ds));
  }
  if (reports.empty()) throw ConfigurationError("ml: --model must be logistic, tree or both");
  if (c.format == "text") {
    for (const auto& [name, m] : reports) metrics_text(name, m, out);
    return kExitOk;
  }
  for (const auto& [name, m] : reports) models[name] = metrics_json(m);
  j["models"] = models;
  emit_json(c, j, out);
  return kExitOk;
}

int cmd_pca(const RunConfig& c, std::ostream& out) {
  require_in(c);
  const auto records = load_records(c.in);
  std::vector<std::vector<double>> X;
  std::vector<const CurveRecord*> used;
  for (const auto& r : records) {
    if (!r.regulator || !r.l1 || !r.omega_period || !r.tamagawa) continue;
    X.push_back({4.0, *r.regulator, *r.l1, *r.omega_period, static_cast<double>(*r.tamagawa)});
    used.push_back(&r);
  }
  if (X.empty()) throw SchemaError("pca: no record carries regulator, l1, omega_period and tamagawa");
  const PCAResult res = pca(X, c.k);
  if (!c.out.empty()) {
    auto os = open_out(c.out);
    write_timestamp_line(c, os);
    os << 'D';
    for (std::size_t i = 1; i <= c.k; ++i) os << ",pc" << i;
    os << ",mw_rank,s2,iscongruent,residue8\n";
    for (std::size_t i = 0; i < used.size(); ++i) {
      const CurveRecord& r = *used[i];
      os << r.D;
      for (double v : res.projected[i]) os << ',' << csv::format_real(v);
      const auto lab = congruence_label(r);
      os << ',' << (r.mw_rank ? std::to_string(*r.mw_rank) : "") << ',' << r.s2 << ','
         << (lab ? std::to_string(*lab) : "") << ',' << r.residue8 << '\n';
    }
  }
  json j = header(c);
  j["features"] = {"torsion", "regulator", "l1", "omega_period", "tamagawa"};
  j["rows"] = X.size();
  j["eigenvalues"] = res.eigenvalues;
  j["explained_variance"] = res.explained_variance;
  j["total_variance"] = res.total_variance;
  j["components"] = res.components;
  out << j.dump(2) << '\n';
  return kExitOk;
}

// -----------------------------------------------------------------------------
// ingest
// -----------------------------------------------------------------------------

int cmd_ingest(const RunConfig& c, std::ostream& out) {
  require_in(c);
  if (c.source.empty()) throw ConfigurationError("ingest: --source is required");
  IngestSchema schema;
  if (!c.schema.empty()) {
    std::ifstream is(c.schema);
    if (!is) throw DataError("ingest: cannot open schema " + c.schema);
    schema = parse_ingest_schema(is);
  } else {
    // Identity mapping over the target names present in the source header.
    std::ifstream is(c.source);
    std::string line;
    if (!is || !csv::next_line(is, line)) throw DataError("ingest: cannot read " + c.source);
    const auto hdr = csv::split(line);
    std::vector<std::string> present;
    for (const auto& t : ingest_targets()) {
      if (std::find(hdr.begin(), hdr.end(), t) != hdr.end()) present.push_back(t);
    }
    schema = IngestSchema::identity(present);
  }
  const IngestResult ing = ingest_csv(c.source, schema);
  MergeReport rep = merge_and_validate(load_records(c.in), ing);
  if (!c.out.empty()) {
    auto os = open_out(c.out);
    write_timestamp_line(c, os);
    write_records(os, rep.records);
  }
  json j = header(c);
  j["source_rows"] = ing.data_lines;
  j["ingested"] = ing.rows.size();
  j["duplicates"] = ing.duplicates;
  json errs = json::array();
  for (const auto& e : ing.errors) errs.push_back({{"line", e.line}, {"message", e.message}});
  j["row_errors"] = errs;
  j["matched"] = rep.matched;
  j["unmatched_ingested"] = rep.unmatched_ingested;
  j["violations"] = violations_json(rep.violations);
  out << j.dump(2) << '\n';
  return rep.clean() ? kExitOk : kExitValidation;
}

// -----------------------------------------------------------------------------
// verify
// -----------------------------------------------------------------------------

int cmd_verify(const RunConfig& c, std::ostream& out) {
  const i64 N = c.max > 0 ? c.max : 2000;
  const auto table = table_for(N, 1000);
  const auto sf = enumerate_squarefree(N, table);
  json j = header(c);
  j["max"] = N;
  json checks = json::array();
  bool ok = true;
  auto record = [&](const std::string& name, i64 checked, const json& failures) {
    const bool pass = failures.empty();
    ok = ok && pass;
    checks.push_back({{"check", name}, {"checked", checked}, {"pass", pass}, {"failures", failures}});
  };

  OracleOptions oo;
  oo.depth_bump = c.depth_bump;

  // Oracle against the matrix route (odd D), parity for every D.
  {
    json fail = json::array();
    json pfail = json::array();
    std::vector<int> oracle_s(sf.size());
    parallel_chunks(sf.size(), c.workers,
                    [&](std::size_t i) { oracle_s[i] = selmer_rank_oracle(sf[i], table, oo).s; });
    i64 odd = 0;
    for (std::size_t i = 0; i < sf.size(); ++i) {
      const i64 D = sf[i];
      if (oracle_s[i] % 2 != expected_parity(D)) pfail.push_back({{"D", D}, {"s", oracle_s[i]}});
      const int m = D % 2 == 1 ? monsky_rank(D, table) : monsky_rank_even(D, table);
      odd += D % 2;
      if (m != oracle_s[i]) fail.push_back({{"D", D}, {"oracle", oracle_s[i]}, {"matrix", m}});
    }
    record("oracle_vs_matrix", static_cast<i64>(sf.size()), fail);
    record("parity", static_cast<i64>(sf.size()), pfail);
  }

  // CM trace formula against point counting.
  {
    json fail = json::array();
    i64 n = 0;
    const i64 dmax = std::min<i64>(N, 50);
    for (i64 D = 1; D <= dmax; ++D) {
      for (i64 p : table.primes()) {
        if (p > 1000) break;
        if (p == 2 || D % p == 0) continue;
        ++n;
        const i64 a = ap_twist(D, p);
        const i64 b = ap_bruteforce(-D * D, 0, p);
        if (a != b) fail.push_back({{"D", D}, {"p", p}, {"formula", a}, {"count", b}});
      }
    }
    record("cm_traces", n, fail);
  }

  // Smith's parity criterion for the normalized special value.
  {
    json fail = json::array();
    i64 n = 0;
    for (i64 D : sf) {
      if (D > 500) break;
      ++n;
      const BSDParams b = normalized_bsd(D, table, selmer_rank(D, table).s, c.tol.value_or(1e-9));
      if (!b.smith_holds.value_or(false)) fail.push_back({{"D", D}, {"normalized_bsd", b.normalized}});
    }
    record("smith", n, fail);
  }

  // Model normalizations.
  {
    json fail = json::array();
    double s = 0.0;
    for (int d = 0; d <= 30; ++d) s += pr_pmf(d);
    if (std::abs(s - 1.0) > 1e-6) fail.push_back({{"model", "poonen_rains"}, {"sum", s}});
    for (i64 p : {2, 3}) {
      for (int r : {0, 1}) {
        double t = 0.0;
        for (int k = 0; k <= 60; ++k) t += delaunay_pmf(p, r, k);
        if (std::abs(t - 1.0) > 1e-4) fail.push_back({{"model", "delaunay"}, {"p", p}, {"r", r}, {"sum", t}});
      }
    }
    record("model_normalization", 5, fail);
  }

  j["checks"] = checks;
  j["pass"] = ok;
  out << j.dump(2) << '\n';
  return ok ? kExitOk : kExitValidation;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Congruent-number curve statistics"};
  app.require_subcommand(1);
  app.fallthrough();

  app.add_option("--max", c.max, "Upper bound X on D");
  app.add_option("--class", c.class_key, "Residue classes mod 8: all, 5 or a list like 1,3");
  app.add_option("--seed", c.seed, "Seed for stochastic runs");
  app.add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--in", c.in, "Input records CSV");
  app.add_option("--out", c.out, "Output path");
  app.add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json", "text"}));
  app.add_option("--tol", c.tol, "Series tolerance for L-values")->check(CLI::PositiveNumber);
  app.add_option("--depth-bump", c.depth_bump, "Extra p-adic depth in the descent oracle")->check(CLI::NonNegativeNumber);
  app.add_flag("--no-timestamp", c.no_timestamp, "Omit the generated-at line");

  auto* sieve = app.add_subcommand("sieve", "Square-free D <= X and class sizes mod 8");
  auto* selmer = app.add_subcommand("selmer", "2-Selmer ranks s(D), written as curves.csv");
  selmer->add_flag("--even-matrix", c.even_matrix, "Matrix route for even D");
  selmer->add_option("--height", c.height, "Point search height for s > 0 (0 = no search)");
  selmer->add_option("--chunk", c.chunk, "D-range per work unit")->check(CLI::PositiveNumber);
  selmer->add_option("--budget-chunks", c.budget_chunks, "Stop after this many chunks and leave a resume token");
  selmer->add_flag("--resume", c.resume, "Continue from <out>.resume");
  auto* traces = app.add_subcommand("traces", "Frobenius trace table or twist-family averages");
  traces->add_option("--primes", c.primes, "Number of primes per row")->check(CLI::PositiveNumber);
  traces->add_option("--n", c.n, "Prime index for averages f_X(n)")->check(CLI::PositiveNumber);
  traces->add_option("--family", c.family, "quadratic, cubic or quartic")
      ->check(CLI::IsMember({"quadratic", "cubic", "quartic"}));
  auto* stats = app.add_subcommand("stats", "Rank distribution tables");
  stats->add_option("--table", c.table, "hb-pmf, trailing, average, classes, pr, delaunay, resample, sha");
  stats->add_option("--column", c.column, "s2, s3, mw or analytic");
  stats->add_option("--inclusion", c.inclusion, "Resampling inclusion probability");
  stats->add_option("--trials", c.trials, "Resampling trials");
  auto* goldfeld = app.add_subcommand("goldfeld", "Rank 0 / rank 1 proportions and chi-square");
  goldfeld->add_option("--column", c.column, "s2, s3, mw or analytic");
  goldfeld->add_option("--stride", c.stride, "Running-proportion stride")->check(CLI::PositiveNumber);
  goldfeld->add_option("--counts", c.counts, "Test explicit counts instead of a file")->delimiter(',');
  auto* bsd = app.add_subcommand("bsd", "Periods, L(1), Tamagawa products and the normalized BSD value");
  auto* ml = app.add_subcommand("ml", "Congruence classifiers");
  ml->add_option("--features", c.features, "Comma list of residues, bsd, selmer, traces");
  ml->add_option("--model", c.model, "logistic, tree or both");
  ml->add_option("--epochs", c.epochs, "Gradient-descent epochs")->check(CLI::PositiveNumber);
  ml->add_option("--lr", c.lr, "Initial learning rate")->check(CLI::PositiveNumber);
  ml->add_option("--max-depth", c.max_depth, "Tree depth")->check(CLI::PositiveNumber);
  ml->add_option("--min-leaf", c.min_leaf, "Tree leaf size")->check(CLI::PositiveNumber);
  ml->add_option("--primes", c.primes, "Trace features: number of primes")->check(CLI::PositiveNumber);
  auto* pcac = app.add_subcommand("pca", "PCA of the BSD invariants");
  pcac->add_option("--k", c.k, "Components")->check(CLI::PositiveNumber);
  auto* ingest = app.add_subcommand("ingest", "Merge an external CSV into records and validate");
  ingest->add_option("--source", c.source, "External CSV");
  ingest->add_option("--schema", c.schema, "Column mapping file");
  auto* verify = app.add_subcommand("verify", "Cross-check routes and invariants");
  (void)verify;
  (void)sieve;
  (void)bsd;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  c.subcommand = app.get_subcommands().front()->get_name();
  if (c.format.empty()) c.format = "json";

  try {
    if (c.subcommand == "sieve") return cmd_sieve(c, out);
    if (c.subcommand == "selmer") return cmd_selmer(c, out);
    if (c.subcommand == "traces") return cmd_traces(c, out);
    if (c.subcommand == "stats") return cmd_stats(c, out);
    if (c.subcommand == "goldfeld") return cmd_goldfeld(c, out);
    if (c.subcommand == "bsd") return cmd_bsd(c, out);
    if (c.subcommand == "ml") return cmd_ml(c, out);
    if (c.subcommand == "pca") return cmd_pca(c, out);
    if (c.subcommand == "ingest") return cmd_ingest(c, out);
    if (c.subcommand == "verify") return cmd_verify(c, out);
  } catch (const ConfigurationError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    json j = {{"command", c.subcommand}, {"error", e.what()}};
    out << j.dump(2) << '\n';
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace cnstat::cli
