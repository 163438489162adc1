#pragma once

#include <chrono>
#include <deque>
#include <memory>
#include <vector>

#include "poplar/buffer.hpp"
#include "poplar/common.hpp"

namespace poplar {

struct CommitEntry {
  TxnId txn = kNoTxn;
  Ssn ssn = kNoSsn;
  bool has_writes = false;
  std::chrono::steady_clock::time_point begin_at{};
  std::chrono::steady_clock::time_point enqueued_at{};
};

/// Per-worker commit queues. Qww holds write-only transactions (gated by the
/// mapped buffer's DSN); Qwr holds transactions with reads (gated by the
/// CSN). Only the owning worker touches them.
struct CommitQueues {
  std::deque<CommitEntry> qww;
  std::deque<CommitEntry> qwr;

  std::size_t pending() const { return qww.size() + qwr.size(); }
};

/// Global committable SSN: the minimum DSN over all log buffers, maintained
/// by logger threads with a monotonic max-update.
class CommitCoordinator {
public:
  explicit CommitCoordinator(
      const std::vector<std::unique_ptr<LogBuffer>>& buffers,
      InvariantCounters& counters)
      : buffers_(buffers), counters_(counters) {}

  Ssn advance() {
    Ssn m = ~static_cast<Ssn>(0);
    for (const auto& b : buffers_) m = std::min(m, b->dsn());
    // Sanity: the fresh minimum never exceeds any buffer's dsn right now.
    for (const auto& b : buffers_) {
      if (m > b->dsn())
        counters_.csn_regressions.fetch_add(1, std::memory_order_relaxed);
    }
    Ssn cur = csn_.load(std::memory_order_relaxed);
    while (m > cur &&
           !csn_.compare_exchange_weak(cur, m, std::memory_order_release)) {
    }
    return csn_.load(std::memory_order_acquire);
  }

  Ssn csn() const { return csn_.load(std::memory_order_acquire); }

private:
  const std::vector<std::unique_ptr<LogBuffer>>& buffers_;
  InvariantCounters& counters_;
  std::atomic<Ssn> csn_{kNoSsn};
};

} // namespace poplar
