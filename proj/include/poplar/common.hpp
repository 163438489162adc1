#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <thread>

namespace poplar {

/// Scalable sequence number. 0 is reserved for "never written"; every
/// allocated SSN is >= 1.
using Ssn = std::uint64_t;
constexpr Ssn kNoSsn = 0;

using Key = std::uint64_t;
using TxnId = std::uint64_t;

/// Lock word value for an unlocked tuple. Real transaction ids start at 1.
constexpr TxnId kNoTxn = 0;

/// Transaction id used for engine-internal barrier records.
constexpr TxnId kBarrierTxn = ~static_cast<TxnId>(0);

class EngineError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public EngineError {
public:
  using EngineError::EngineError;
};

class DeviceError : public EngineError {
public:
  using EngineError::EngineError;
};

/// Thrown when an injected crash halts the engine; test harnesses catch it,
/// discard all volatile state and run recovery against the device contents.
class EngineHalted : public EngineError {
public:
  EngineHalted() : EngineError("engine halted by injected crash") {}
};

class RecoveryError : public EngineError {
public:
  using EngineError::EngineError;
};

/// Test-and-set spin latch with bounded exponential backoff. The critical
/// sections it protects are a handful of instructions.
class SpinLatch {
public:
  void lock() noexcept {
    int spins = 0;
    while (flag_.exchange(true, std::memory_order_acquire)) {
      if (++spins < 64) {
#if defined(__x86_64__)
        __builtin_ia32_pause();
#endif
      } else {
        std::this_thread::yield();
      }
    }
  }

  bool try_lock() noexcept {
    return !flag_.exchange(true, std::memory_order_acquire);
  }

  void unlock() noexcept { flag_.store(false, std::memory_order_release); }

private:
  std::atomic<bool> flag_{false};
};

/// Always-on instrumented assertions. Each counter must stay zero on a
/// correct engine; tests assert on them after every run. The deliberately
/// broken engine modes are expected to trip some of these.
struct InvariantCounters {
  std::atomic<std::uint64_t> flush_gate_violations{0};
  std::atomic<std::uint64_t> dsn_regressions{0};
  std::atomic<std::uint64_t> csn_regressions{0};
  std::atomic<std::uint64_t> buffer_ssn_regressions{0};
  std::atomic<std::uint64_t> tuple_ssn_regressions{0};
  std::atomic<std::uint64_t> waw_violations{0};
  std::atomic<std::uint64_t> raw_violations{0};
  std::atomic<std::uint64_t> queue_order_violations{0};
  std::atomic<std::uint64_t> segment_state_violations{0};

  std::uint64_t total() const noexcept {
    return flush_gate_violations.load() + dsn_regressions.load() +
           csn_regressions.load() + buffer_ssn_regressions.load() +
           tuple_ssn_regressions.load() + waw_violations.load() +
           raw_violations.load() + queue_order_violations.load() +
           segment_state_violations.load();
  }
};

} // namespace poplar
