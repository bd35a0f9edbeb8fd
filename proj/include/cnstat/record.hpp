#pragma once

// One row per square-free D. Computed columns are always present after
// generation; ingested and L-function columns are optional.

#include <optional>
#include <string>

#include "cnstat/arith.hpp"

namespace cnstat {

struct CurveRecord {
  i64 D = 0;
  int residue8 = 0;
  int residue16 = 0;
  int residue32 = 0;
  int omega = 0;  // distinct primes of D
  int s2 = 0;
  std::string s2_method = "oracle";
  std::string status = "UNKNOWN";

  // Ingested. The source files use -1 for unknown; that never reaches here.
  std::optional<int> mw_rank;
  std::optional<int> sel3_dim;
  std::optional<int> analytic_rank;
  std::optional<double> regulator;
  std::optional<double> analytic_sha;
  std::optional<int> modular_degree_val2;
  std::optional<int> root_number;

  // L-function columns.
  std::optional<double> omega_period;
  std::optional<double> l1;
  std::optional<i64> tamagawa;
  std::optional<double> normalized_bsd;
  std::optional<bool> l_bsd_odd;

  bool operator==(const CurveRecord&) const = default;
};

/// Fills D and the residue columns.
inline CurveRecord make_record(i64 D) {
  CurveRecord r;
  r.D = D;
  r.residue8 = static_cast<int>(D % 8);
  r.residue16 = static_cast<int>(D % 16);
  r.residue32 = static_cast<int>(D % 32);
  return r;
}

}  // namespace cnstat
