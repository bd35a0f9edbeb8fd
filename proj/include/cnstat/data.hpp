#pragma once

// Record persistence (CSV), ingestion of external columns, join validation
// and the chunked record generator.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cnstat/arith.hpp"
#include "cnstat/descent.hpp"
#include "cnstat/errors.hpp"
#include "cnstat/lfunction.hpp"
#include "cnstat/record.hpp"

namespace cnstat {

// =============================================================================
// CSV primitives
// =============================================================================

namespace csv {

/// Splits one RFC-4180 line. Quoted fields may contain commas and doubled quotes.
inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw DataError("csv: unterminated quote");
  out.push_back(std::move(cur));
  return out;
}

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// 17 significant digits: parses back to the same double.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::optional<T> parse_int(const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) return std::nullopt;
  return v;
}

inline std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

}  // namespace csv

// =============================================================================
// Records <-> CSV
// =============================================================================

inline const std::vector<std::string>& record_columns() {
  static const std::vector<std::string> cols = {
      "D",        "residue8",     "residue16", "residue32",     "omega",     "s2",
      "s2_method", "status",      "mw_rank",   "sel3_dim",      "analytic_rank", "regulator",
      "analytic_sha", "modular_degree_val2", "root_number", "omega_period", "l1", "tamagawa",
      "normalized_bsd", "l_bsd_odd"};
  return cols;
}

namespace data_detail {

template <class T>
std::string opt_int(const std::optional<T>& v) {
  return v ? std::to_string(*v) : std::string();
}
inline std::string opt_real(const std::optional<double>& v) { return v ? csv::format_real(*v) : std::string(); }

template <class T>
void read_int(const std::string& s, std::optional<T>& dst, const char* col) {
  if (s.empty()) {
    dst.reset();
    return;
  }
  const auto v = csv::parse_int<T>(s);
  if (!v) throw DataError(std::string("records csv: bad integer in column ") + col + ": '" + s + "'");
  dst = *v;
}

inline void read_real(const std::string& s, std::optional<double>& dst, const char* col) {
  if (s.empty()) {
    dst.reset();
    return;
  }
  const auto v = csv::parse_real(s);
  if (!v) throw DataError(std::string("records csv: bad real in column ") + col + ": '" + s + "'");
  dst = *v;
}

template <class T>
T need_int(const std::string& s, const char* col) {
  std::optional<T> v;
  read_int(s, v, col);
  if (!v) throw DataError(std::string("records csv: empty mandatory column ") + col);
  return *v;
}

}  // namespace data_detail

/// Text of one column of a record; "" for a missing optional.
inline std::string record_field(const CurveRecord& r, const std::string& col) {
  using namespace data_detail;
  if (col == "D") return std::to_string(r.D);
  if (col == "residue8") return std::to_string(r.residue8);
  if (col == "residue16") return std::to_string(r.residue16);
  if (col == "residue32") return std::to_string(r.residue32);
  if (col == "omega") return std::to_string(r.omega);
  if (col == "s2") return std::to_string(r.s2);
  if (col == "s2_method") return csv::quote(r.s2_method);
  if (col == "status") return csv::quote(r.status);
  if (col == "mw_rank") return opt_int(r.mw_rank);
  if (col == "sel3_dim") return opt_int(r.sel3_dim);
  if (col == "analytic_rank") return opt_int(r.analytic_rank);
  if (col == "regulator") return opt_real(r.regulator);
  if (col == "analytic_sha") return opt_real(r.analytic_sha);
  if (col == "modular_degree_val2") return opt_int(r.modular_degree_val2);
  if (col == "root_number") return opt_int(r.root_number);
  if (col == "omega_period") return opt_real(r.omega_period);
  if (col == "l1") return opt_real(r.l1);
  if (col == "tamagawa") return opt_int(r.tamagawa);
  if (col == "normalized_bsd") return opt_real(r.normalized_bsd);
  if (col == "l_bsd_odd") return r.l_bsd_odd ? (*r.l_bsd_odd ? "1" : "0") : "";
  throw SchemaError("record_field: unknown column '" + col + "'");
}

inline const std::vector<std::string>& curves_columns() {
  static const std::vector<std::string> cols = {"D",     "residue8", "residue16", "residue32",
                                                "omega", "s2",       "s2_method", "status"};
  return cols;
}

inline const std::vector<std::string>& bsd_columns() {
  static const std::vector<std::string> cols = {"D", "omega_period", "l1", "tamagawa", "normalized_bsd",
                                                "l_bsd_odd"};
  return cols;
}

inline std::string record_row(const CurveRecord& r, const std::vector<std::string>& cols = record_columns()) {
  std::string line;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) line += ',';
    line += record_field(r, cols[i]);
  }
  return line;
}

inline void write_records(std::ostream& os, const std::vector<CurveRecord>& records,
                          const std::vector<std::string>& cols = record_columns()) {
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : records) os << record_row(r, cols) << '\n';
}

inline void save_records(const std::string& path, const std::vector<CurveRecord>& records,
                         const std::vector<std::string>& cols = record_columns()) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("save_records: cannot open " + path);
  write_records(os, records, cols);
  if (!os) throw DataError("save_records: write failed for " + path);
}

namespace csv {

/// Next line that is not a '#' comment.
inline bool next_line(std::istream& is, std::string& line) {
  while (std::getline(is, line)) {
    if (line.empty() || line[0] != '#') return true;
  }
  return false;
}

}  // namespace csv

/// Reads a file written by save_records. Columns are matched by header name,
/// so a subset of the optional columns is accepted. '#' lines are skipped.
inline std::vector<CurveRecord> read_records(std::istream& is) {
  using namespace data_detail;
  std::string line;
  if (!csv::next_line(is, line)) throw DataError("records csv: empty input");
  const auto header = csv::split(line);
  std::map<std::string, std::size_t> at;
  for (std::size_t i = 0; i < header.size(); ++i) at[header[i]] = i;
  for (const char* c : {"D", "s2"}) {
    if (!at.count(c)) throw SchemaError(std::string("records csv: missing column ") + c);
  }
  std::vector<CurveRecord> out;
  std::size_t lineno = 1;
  while (csv::next_line(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split(line);
    if (f.size() != header.size()) {
      throw DataError("records csv: line " + std::to_string(lineno) + " has " + std::to_string(f.size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
    auto get = [&](const char* c) -> std::string {
      const auto it = at.find(c);
      return it == at.end() ? std::string() : f[it->second];
    };
    CurveRecord r = make_record(need_int<i64>(get("D"), "D"));
    if (at.count("omega")) r.omega = need_int<int>(get("omega"), "omega");
    r.s2 = need_int<int>(get("s2"), "s2");
    if (at.count("s2_method")) r.s2_method = get("s2_method");
    if (at.count("status")) r.status = get("status");
    read_int(get("mw_rank"), r.mw_rank, "mw_rank");
    read_int(get("sel3_dim"), r.sel3_dim, "sel3_dim");
    read_int(get("analytic_rank"), r.analytic_rank, "analytic_rank");
    read_real(get("regulator"), r.regulator, "regulator");
    read_real(get("analytic_sha"), r.analytic_sha, "analytic_sha");
    read_int(get("modular_degree_val2"), r.modular_degree_val2, "modular_degree_val2");
    read_int(get("root_number"), r.root_number, "root_number");
    read_real(get("omega_period"), r.omega_period, "omega_period");
    read_real(get("l1"), r.l1, "l1");
    read_int(get("tamagawa"), r.tamagawa, "tamagawa");
    read_real(get("normalized_bsd"), r.normalized_bsd, "normalized_bsd");
    std::optional<int> odd;
    read_int(get("l_bsd_odd"), odd, "l_bsd_odd");
    if (odd) r.l_bsd_odd = *odd != 0;
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<CurveRecord> load_records(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_records: cannot open " + path);
  return read_records(is);
}

// =============================================================================
// Ingestion
// =============================================================================

/// Maps target fields to source column names. Plain-text form, one per line:
///   D = conductor_twist
///   mw_rank = rank
/// with '#' comments. Targets not listed are not ingested.
struct IngestSchema {
  std::map<std::string, std::string> columns;  // target -> source
  i64 sentinel = -1;                           // integer value meaning "unknown"
  double max_error_rate = 0.001;

  static IngestSchema identity(const std::vector<std::string>& targets) {
    IngestSchema s;
    s.columns["D"] = "D";
    for (const auto& t : targets) s.columns[t] = t;
    return s;
  }
};

inline const std::vector<std::string>& ingest_targets() {
  static const std::vector<std::string> t = {"mw_rank",      "sel3_dim",            "analytic_rank",
                                             "regulator",    "analytic_sha",        "modular_degree_val2",
                                             "root_number"};
  return t;
}

inline IngestSchema parse_ingest_schema(std::istream& is) {
  IngestSchema s;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string x) {
    const auto b = x.find_first_not_of(" \t\r");
    const auto e = x.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : x.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw SchemaError("ingest schema line " + std::to_string(lineno) + ": expected '='");
    const std::string target = trim(line.substr(0, eq));
    const std::string source = trim(line.substr(eq + 1));
    if (target == "sentinel") {
      const auto v = csv::parse_int<i64>(source);
      if (!v) throw SchemaError("ingest schema: bad sentinel");
      s.sentinel = *v;
    } else if (target == "max_error_rate") {
      const auto v = csv::parse_real(source);
      if (!v || *v < 0.0) throw SchemaError("ingest schema: bad max_error_rate");
      s.max_error_rate = *v;
    } else {
      const auto& t = ingest_targets();
      if (target != "D" && std::find(t.begin(), t.end(), target) == t.end()) {
        throw SchemaError("ingest schema: unknown target '" + target + "'");
      }
      s.columns[target] = source;
    }
  }
  if (!s.columns.count("D")) throw SchemaError("ingest schema: D mapping is mandatory");
  return s;
}

struct IngestedRow {
  std::optional<int> mw_rank;
  std::optional<int> sel3_dim;
  std::optional<int> analytic_rank;
  std::optional<double> regulator;
  std::optional<double> analytic_sha;
  std::optional<int> modular_degree_val2;
  std::optional<int> root_number;
};

struct RowError {
  std::size_t line = 0;
  std::string message;
};

struct IngestResult {
  std::map<i64, IngestedRow> rows;
  std::size_t data_lines = 0;
  std::size_t duplicates = 0;
  std::vector<RowError> errors;
};

namespace data_detail {

inline void ingest_int(const std::string& s, i64 sentinel, std::optional<int>& dst, const std::string& col) {
  if (s.empty()) return;
  const auto v = csv::parse_int<i64>(s);
  if (!v) throw DataError("column " + col + ": not an integer: '" + s + "'");
  if (*v == sentinel) return;
  dst = static_cast<int>(*v);
}

inline void ingest_real(const std::string& s, i64 sentinel, std::optional<double>& dst, const std::string& col) {
  if (s.empty()) return;
  const auto v = csv::parse_real(s);
  if (!v) throw DataError("column " + col + ": not a number: '" + s + "'");
  if (*v == static_cast<double>(sentinel)) return;
  dst = *v;
}

}  // namespace data_detail

/// Parses an external CSV. Bad rows are recorded and skipped; if their rate
/// exceeds schema.max_error_rate the whole file is rejected with DataError.
inline IngestResult ingest_csv(std::istream& is, const IngestSchema& schema) {
  std::string line;
  if (!csv::next_line(is, line)) throw DataError("ingest_csv: empty input");
  const auto header = csv::split(line);
  std::map<std::string, std::size_t> at;
  for (std::size_t i = 0; i < header.size(); ++i) at[header[i]] = i;
  std::map<std::string, std::size_t> col;  // target -> index
  for (const auto& [target, source] : schema.columns) {
    const auto it = at.find(source);
    if (it == at.end()) throw SchemaError("ingest_csv: source column '" + source + "' not in header");
    col[target] = it->second;
  }
  IngestResult res;
  std::size_t lineno = 1;
  while (csv::next_line(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    ++res.data_lines;
    try {
      const auto f = csv::split(line);
      if (f.size() != header.size()) throw DataError("field count " + std::to_string(f.size()));
      const auto D = csv::parse_int<i64>(f[col.at("D")]);
      if (!D || *D < 1) throw DataError("bad D '" + f[col.at("D")] + "'");
      IngestedRow row;
      const i64 sent = schema.sentinel;
      auto field = [&](const char* t) -> std::string {
        const auto it = col.find(t);
        return it == col.end() ? std::string() : f[it->second];
      };
      data_detail::ingest_int(field("mw_rank"), sent, row.mw_rank, "mw_rank");
      data_detail::ingest_int(field("sel3_dim"), sent, row.sel3_dim, "sel3_dim");
      data_detail::ingest_int(field("analytic_rank"), sent, row.analytic_rank, "analytic_rank");
      data_detail::ingest_real(field("regulator"), sent, row.regulator, "regulator");
      data_detail::ingest_real(field("analytic_sha"), sent, row.analytic_sha, "analytic_sha");
      data_detail::ingest_int(field("modular_degree_val2"), sent, row.modular_degree_val2, "modular_degree_val2");
      data_detail::ingest_int(field("root_number"), sent, row.root_number, "root_number");
      if (res.rows.count(*D)) ++res.duplicates;
      res.rows[*D] = row;  // last wins
    } catch (const Error& e) {
      res.errors.push_back({lineno, e.what()});
    }
  }
  if (res.data_lines > 0 &&
      static_cast<double>(res.errors.size()) > schema.max_error_rate * static_cast<double>(res.data_lines)) {
    throw DataError("ingest_csv: " + std::to_string(res.errors.size()) + " bad rows of " +
                    std::to_string(res.data_lines) + " exceeds the error-rate threshold");
  }
  return res;
}

inline IngestResult ingest_csv(const std::string& path, const IngestSchema& schema) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("ingest_csv: cannot open " + path);
  return ingest_csv(is, schema);
}

// =============================================================================
// Merge and validation
// =============================================================================

struct Violation {
  i64 D = 0;
  std::string kind;  // "parity", "mw_rank_exceeds_s2", "sha_dim_odd"
  std::string detail;
};

struct MergeReport {
  std::vector<CurveRecord> records;
  std::size_t matched = 0;
  std::size_t unmatched_ingested = 0;
  std::vector<Violation> violations;
  bool clean() const { return violations.empty(); }
};

/// Checks applied to a record whether or not anything was ingested.
inline void validate_record(const CurveRecord& r, std::vector<Violation>& out) {
  if (r.s2 % 2 != expected_parity(r.D)) {
    out.push_back({r.D, "parity", "s2=" + std::to_string(r.s2) + " with D mod 8 = " + std::to_string(r.D % 8)});
  }
  if (r.mw_rank && *r.mw_rank > r.s2) {
    out.push_back({r.D, "mw_rank_exceeds_s2",
                   "mw_rank=" + std::to_string(*r.mw_rank) + " > s2=" + std::to_string(r.s2)});
  }
  // Sha[2] has even dimension: s2 - mw_rank must be even.
  if (r.mw_rank && *r.mw_rank <= r.s2 && (r.s2 - *r.mw_rank) % 2 != 0) {
    out.push_back({r.D, "sha_dim_odd", "s2 - mw_rank = " + std::to_string(r.s2 - *r.mw_rank)});
  }
}

inline MergeReport merge_and_validate(std::vector<CurveRecord> records, const IngestResult& ingested) {
  MergeReport rep;
  for (auto& r : records) {
    const auto it = ingested.rows.find(r.D);
    if (it != ingested.rows.end()) {
      ++rep.matched;
      const IngestedRow& row = it->second;
      r.mw_rank = row.mw_rank;
      r.sel3_dim = row.sel3_dim;
      r.analytic_rank = row.analytic_rank;
      r.regulator = row.regulator;
      r.analytic_sha = row.analytic_sha;
      r.modular_degree_val2 = row.modular_degree_val2;
      r.root_number = row.root_number;
    }
    validate_record(r, rep.violations);
  }
  if (!ingested.rows.empty() && rep.matched == 0) {
    throw ConfigurationError("merge_and_validate: no D in common between records and ingested file");
  }
  rep.unmatched_ingested = ingested.rows.size() - rep.matched;
  rep.records = std::move(records);
  return rep;
}

// =============================================================================
// Generation
// =============================================================================

/// Runs fn(chunk) for chunk in [0, n) on `workers` threads. Chunks are claimed
/// from a shared counter; the first exception is rethrown after all join.
inline void parallel_chunks(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const unsigned w = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  for (unsigned t = 0; t < w; ++t) {
    pool.emplace_back([&] {
      while (!failed) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline unsigned default_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

struct GenerateOptions {
  i64 start = 1;             // resume token: first D to process
  unsigned workers = 1;
  i64 chunk = 20000;         // D-range per work unit
  std::size_t max_chunks = 0;  // 0 = no budget
  bool even_matrix = false;  // matrix path for even D instead of the oracle
  bool lfunction = false;
  i64 search_height = 0;     // > 0: look for a witness point when s2 > 0
  OracleOptions oracle;
};

struct GenerateResult {
  std::vector<CurveRecord> records;  // increasing D
  bool complete = true;
  i64 resume_from = 0;  // next D to process when !complete
};

inline CurveRecord compute_record(i64 D, const PrimeTable& table, const GenerateOptions& opt) {
  CurveRecord r = make_record(D);
  const Factorization f = factor(D, table);
  r.omega = f.omega;
  const bool oracle_needed = opt.search_height > 0 || (D % 2 == 0 && !opt.even_matrix);
  SelmerGroup g = oracle_needed ? selmer_rank_oracle(D, table, opt.oracle) : selmer_rank(D, table, opt.even_matrix);
  r.s2 = g.s;
  r.s2_method = to_string(g.method);
  if (g.s == 0) {
    r.status = to_string(Congruence::NoncongruentCertified);
  } else if (opt.search_height > 0) {
    r.status = to_string(certify_status(D, g, opt.search_height, table).status);
  }
  if (opt.lfunction) {
    const BSDParams b = normalized_bsd(D, table, g.s);
    r.omega_period = b.omega;
    r.l1 = b.l1;
    r.tamagawa = b.tamagawa;
    r.normalized_bsd = b.normalized;
    r.l_bsd_odd = b.l_bsd_odd;
    if (g.s == 0) r.regulator = 1.0;  // rank 0 is certified
  }
  return r;
}

/// One record per square-free D in [opt.start, X]. With a chunk budget the
/// result may stop early; `resume_from` continues it and the concatenation
/// equals a single run.
inline GenerateResult generate_records(i64 X, const GenerateOptions& opt, const PrimeTable& table) {
  if (X < 1) throw DomainError("generate_records: X must be >= 1");
  if (X > static_cast<i64>(table.limit())) throw RangeError("generate_records: X beyond sieve limit");
  if (opt.chunk < 1) throw DomainError("generate_records: chunk must be >= 1");
  GenerateResult res;
  if (opt.start > X) return res;
  const i64 lo = std::max<i64>(opt.start, 1);
  std::size_t nchunks = static_cast<std::size_t>((X - lo) / opt.chunk + 1);
  if (opt.max_chunks > 0 && opt.max_chunks < nchunks) {
    nchunks = opt.max_chunks;
    res.complete = false;
    res.resume_from = lo + static_cast<i64>(nchunks) * opt.chunk;
  }
  std::vector<std::vector<CurveRecord>> parts(nchunks);
  parallel_chunks(nchunks, opt.workers, [&](std::size_t c) {
    const i64 a = lo + static_cast<i64>(c) * opt.chunk;
    const i64 b = std::min(X, a + opt.chunk - 1);
    for (i64 D = a; D <= b; ++D) {
      if (is_squarefree(D, table)) parts[c].push_back(compute_record(D, table, opt));
    }
  });
  for (auto& p : parts) {
    res.records.insert(res.records.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  return res;
}

}  // namespace cnstat
