#pragma once

#include "poplar/common.hpp"
#include "poplar/table.hpp"
#include "poplar/txn.hpp"

namespace poplar {

/// Base for SSN allocation: the largest SSN among all tuples the transaction
/// read or wrote. Read-set tuples contribute the version actually observed
/// (recorded at read time and re-validated since); write-set tuples
/// contribute their current header, which is stable because the caller holds
/// their locks.
inline Ssn compute_base(const Transaction& txn, const Table& table) {
  Ssn base = kNoSsn;
  for (const auto& [key, observed] : txn.read_set) {
    base = std::max(base, observed);
  }
  for (const auto& [key, value] : txn.write_set) {
    (void)value;
    const Tuple* t = table.lookup(key);
    if (t) base = std::max(base, t->ssn());
  }
  return base;
}

/// Read-only transactions take base as their SSN: no buffer interaction and
/// no tuple stamping. They commit once the CSN covers everything they read.
inline Ssn allocate_readonly_ssn(Transaction& txn, const Table& table) {
  txn.ssn = compute_base(txn, table);
  return txn.ssn;
}

} // namespace poplar
