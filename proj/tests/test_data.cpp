#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "cnstat/data.hpp"

using namespace cnstat;

namespace {

const PrimeTable& table() {
  static const PrimeTable t = build_prime_table(100000);
  return t;
}

CurveRecord full_record() {
  auto r = make_record(34);
  r.omega = 2;
  r.s2 = 2;
  r.s2_method = "oracle";
  r.status = "UNKNOWN";
  r.mw_rank = 0;
  r.sel3_dim = 0;
  r.analytic_rank = 0;
  r.regulator = 1.0;
  r.analytic_sha = 4.0000000000000009;
  r.modular_degree_val2 = 3;
  r.root_number = 1;
  r.omega_period = 0.89935718985311224;
  r.l1 = 1.0 / 3.0;
  r.tamagawa = 16;
  r.normalized_bsd = std::nextafter(4.0, 5.0);
  r.l_bsd_odd = false;
  return r;
}

}  // namespace

TEST(Csv, SplitQuoted) {
  EXPECT_EQ(csv::split("a,\"b,c\",\"d\"\"e\","), (std::vector<std::string>{"a", "b,c", "d\"e", ""}));
  EXPECT_THROW(csv::split("\"open"), DataError);
  EXPECT_EQ(csv::quote("x,y"), "\"x,y\"");
}

TEST(Csv, RealsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 5.2441151085842, 1e-300, -2.5e17, std::nextafter(1.0, 2.0)}) {
    EXPECT_EQ(*csv::parse_real(csv::format_real(v)), v);
  }
  EXPECT_FALSE(csv::parse_real("1.5x"));
  EXPECT_FALSE(csv::parse_int<int>("12a"));
}

TEST(Records, RoundTripExact) {
  std::vector<CurveRecord> recs = {full_record(), make_record(1)};
  recs[1].s2 = 0;
  std::stringstream ss;
  write_records(ss, recs);
  EXPECT_EQ(read_records(ss), recs);
}

TEST(Records, CommentsAndColumnSubsets) {
  std::stringstream ss;
  ss << "# generated now\n";
  write_records(ss, {full_record()}, curves_columns());
  const auto back = read_records(ss);
  ASSERT_EQ(back.size(), 1U);
  EXPECT_EQ(back[0].D, 34);
  EXPECT_EQ(back[0].s2, 2);
  EXPECT_FALSE(back[0].mw_rank);
}

TEST(Records, Malformed) {
  std::stringstream missing("D,omega\n5,1\n");
  EXPECT_THROW(read_records(missing), SchemaError);
  std::stringstream bad("D,s2\n5,x\n");
  EXPECT_THROW(read_records(bad), DataError);
  std::stringstream ragged("D,s2\n5\n");
  EXPECT_THROW(read_records(ragged), DataError);
}

TEST(Ingest, SentinelsAndDuplicates) {
  std::stringstream src("D,rank,sel3\n34,-1,2\n5,1,\n5,1,1\n41,2,0\n");
  IngestSchema s;
  s.columns = {{"D", "D"}, {"mw_rank", "rank"}, {"sel3_dim", "sel3"}};
  const auto res = ingest_csv(src, s);
  EXPECT_EQ(res.rows.size(), 3U);
  EXPECT_EQ(res.duplicates, 1U);
  EXPECT_FALSE(res.rows.at(34).mw_rank);
  EXPECT_EQ(*res.rows.at(34).sel3_dim, 2);
  EXPECT_EQ(*res.rows.at(5).sel3_dim, 1);  // last wins
  EXPECT_EQ(*res.rows.at(41).mw_rank, 2);
}

TEST(Ingest, ErrorThreshold) {
  std::string body = "D,rank\n";
  for (int i = 1; i <= 2000; ++i) body += std::to_string(i) + "," + std::to_string(i % 3) + "\n";
  body += "oops,1\n";
  IngestSchema s;
  s.columns = {{"D", "D"}, {"mw_rank", "rank"}};
  std::stringstream ok(body);
  const auto res = ingest_csv(ok, s);
  ASSERT_EQ(res.errors.size(), 1U);
  EXPECT_EQ(res.errors[0].line, 2002U);
  body += "7,x\n8,y\n9,z\n";
  std::stringstream bad(body);
  EXPECT_THROW(ingest_csv(bad, s), DataError);
}

TEST(Ingest, SchemaFile) {
  std::stringstream f("# mapping\nD = n\nmw_rank = r  # rank column\nsentinel = -9\n");
  const auto s = parse_ingest_schema(f);
  EXPECT_EQ(s.columns.at("D"), "n");
  EXPECT_EQ(s.columns.at("mw_rank"), "r");
  EXPECT_EQ(s.sentinel, -9);
  std::stringstream nod("mw_rank = r\n");
  EXPECT_THROW(parse_ingest_schema(nod), SchemaError);
  std::stringstream unknown("D = n\nheight = h\n");
  EXPECT_THROW(parse_ingest_schema(unknown), SchemaError);
  std::stringstream src("n,r\n1,0\n");
  IngestSchema miss;
  miss.columns = {{"D", "D"}};
  EXPECT_THROW(ingest_csv(src, miss), SchemaError);
}

TEST(Merge, ViolationsListed) {
  GenerateOptions o;
  auto recs = generate_records(50, o, table()).records;
  IngestResult ing;
  ing.rows[5].mw_rank = 2;   // s(5) = 1
  ing.rows[34].mw_rank = 1;  // s(34) = 2, odd Sha dimension
  ing.rows[6].mw_rank = 1;
  const auto rep = merge_and_validate(recs, ing);
  EXPECT_EQ(rep.matched, 3U);
  ASSERT_EQ(rep.violations.size(), 2U);
  EXPECT_EQ(rep.violations[0].D, 5);
  EXPECT_EQ(rep.violations[0].kind, "mw_rank_exceeds_s2");
  EXPECT_EQ(rep.violations[1].D, 34);
  EXPECT_EQ(rep.violations[1].kind, "sha_dim_odd");
  recs[2].s2 = 1;  // D = 3 with odd s
  IngestResult clean;
  clean.rows[6].mw_rank = 1;
  const auto rep2 = merge_and_validate(recs, clean);
  ASSERT_EQ(rep2.violations.size(), 1U);
  EXPECT_EQ(rep2.violations[0].kind, "parity");
}

TEST(Merge, CleanAndZeroOverlap) {
  GenerateOptions o;
  const auto recs = generate_records(30, o, table()).records;
  IngestResult ing;
  ing.rows[6].mw_rank = 1;
  EXPECT_TRUE(merge_and_validate(recs, ing).clean());
  IngestResult far;
  far.rows[99991].mw_rank = 0;
  EXPECT_THROW(merge_and_validate(recs, far), ConfigurationError);
}

TEST(Generate, SmallX) {
  GenerateOptions o;
  const auto res = generate_records(10, o, table());
  std::vector<i64> ds;
  for (const auto& r : res.records) ds.push_back(r.D);
  EXPECT_EQ(ds, (std::vector<i64>{1, 2, 3, 5, 6, 7, 10}));
  EXPECT_TRUE(res.complete);
  EXPECT_EQ(res.records[3].status, "UNKNOWN");
  EXPECT_EQ(res.records[0].status, "NONCONGRUENT_CERTIFIED");
  EXPECT_EQ(res.records[4].s2_method, "oracle");
  EXPECT_EQ(res.records[3].s2_method, "matrix");
}

TEST(Generate, ResumeEqualsSingleRunAndWorkersAgree) {
  GenerateOptions o;
  o.chunk = 997;
  const auto whole = generate_records(20000, o, table());
  GenerateOptions part = o;
  part.max_chunks = 4;
  part.workers = 3;
  auto first = generate_records(20000, part, table());
  EXPECT_FALSE(first.complete);
  part.start = first.resume_from;
  part.max_chunks = 0;
  part.workers = 4;
  const auto rest = generate_records(20000, part, table());
  first.records.insert(first.records.end(), rest.records.begin(), rest.records.end());
  EXPECT_EQ(first.records, whole.records);
}

TEST(Generate, OptionalColumns) {
  GenerateOptions o;
  o.lfunction = true;
  o.search_height = 40;
  const auto res = generate_records(30, o, table());
  for (const auto& r : res.records) {
    ASSERT_TRUE(r.normalized_bsd);
    EXPECT_EQ(*r.l_bsd_odd, r.s2 == 0) << r.D;
  }
  EXPECT_EQ(res.records[4].status, "CONGRUENT_CERTIFIED");  // D = 6
  EXPECT_THROW(generate_records(200000, o, table()), RangeError);
}

TEST(Parallel, PropagatesErrors) {
  EXPECT_THROW(parallel_chunks(10, 4, [](std::size_t i) {
                 if (i == 7) throw DataError("x");
               }),
               DataError);
}
