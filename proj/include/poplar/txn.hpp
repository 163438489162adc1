#pragma once

#include <chrono>
#include <map>
#include <string>

#include "poplar/common.hpp"

namespace poplar {

enum class TxnState { Active, Validated, PreCommitted, Committed, Aborted };

enum class TxnClass { WriteOnly, HasReads, ReadOnly };

/// Private read/write sets of one transaction. Ordered maps: the write set
/// is locked in ascending key order during validation.
struct Transaction {
  TxnId id = kNoTxn;
  std::uint32_t buffer_id = 0;
  std::map<Key, Ssn> read_set;          // key -> ssn observed at read time
  std::map<Key, std::string> write_set; // key -> buffered new value
  Ssn ssn = kNoSsn;
  TxnState state = TxnState::Active;
  std::chrono::steady_clock::time_point begin_at{};

  TxnClass cls() const {
    if (write_set.empty()) return TxnClass::ReadOnly;
    return read_set.empty() ? TxnClass::WriteOnly : TxnClass::HasReads;
  }
};

} // namespace poplar
