#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "poplar/common.hpp"

namespace poplar {

enum class EventKind : std::uint8_t {
  Read,       // txn observed (key, ssn)
  WriteApply, // txn installed (key, value) stamped with ssn
  Insert,     // txn's log record fully copied into its buffer
  Durable,    // buffer's DSN advanced to ssn (records through ssn are on device)
  Commit,     // txn reported committed
  Abort,      // txn aborted during validation
  CheckpointValid, // checkpoint metadata became durable
  Crash,      // injected crash point
};

struct TraceEvent {
  std::uint64_t index = 0;
  EventKind kind = EventKind::Crash;
  TxnId txn = kNoTxn;
  Key key = 0;
  Ssn ssn = kNoSsn;
  std::uint32_t buffer = 0;
  std::string value; // WriteApply payload
};

/// Where an injected crash lands: between two global events, or after a byte
/// count on one device (producing a torn record).
struct CrashPlan {
  enum class Kind { None, AtEvent, AfterBytes };
  Kind kind = Kind::None;
  std::uint64_t event_index = 0;
  std::string device;
  std::uint64_t byte_offset = 0;

  static CrashPlan none() { return {}; }
  static CrashPlan at_event(std::uint64_t k) {
    CrashPlan p;
    p.kind = Kind::AtEvent;
    p.event_index = k;
    return p;
  }
  static CrashPlan after_bytes(std::string device, std::uint64_t n) {
    CrashPlan p;
    p.kind = Kind::AfterBytes;
    p.device = std::move(device);
    p.byte_offset = n;
    return p;
  }
};

/// Verification-build hooks: execution trace capture plus deterministic crash
/// injection. Production code paths hold a null pointer and skip all of this.
class VerifyHooks {
public:
  explicit VerifyHooks(CrashPlan plan = CrashPlan::none(), bool capture = true)
      : plan_(std::move(plan)), capture_(capture) {}

  /// Records one event. Returns false if the engine is already crashed and
  /// the caller must halt without performing further work.
  bool emit(EventKind kind, TxnId txn = kNoTxn, Key key = 0, Ssn ssn = kNoSsn,
            std::uint32_t buffer = 0, std::string value = {}) {
    std::lock_guard<std::mutex> g(mu_);
    if (crashed_) return false;
    const std::uint64_t idx = next_index_++;
    if (capture_) {
      events_.push_back({idx, kind, txn, key, ssn, buffer, std::move(value)});
    }
    if (plan_.kind == CrashPlan::Kind::AtEvent && idx >= plan_.event_index) {
      crash_locked();
    }
    return true;
  }

  /// Called by a device before writing `len` bytes at cumulative stream
  /// offset `offset`. Returns how many bytes may still be persisted; if less
  /// than `len`, the crash has been triggered and the remainder is lost.
  std::uint64_t clamp_write(const std::string& device, std::uint64_t offset,
                            std::uint64_t len) {
    std::lock_guard<std::mutex> g(mu_);
    if (crashed_) return 0;
    if (plan_.kind != CrashPlan::Kind::AfterBytes || device != plan_.device)
      return len;
    if (offset + len <= plan_.byte_offset) return len;
    const std::uint64_t allowed =
        plan_.byte_offset > offset ? plan_.byte_offset - offset : 0;
    crash_locked();
    return allowed;
  }

  void inject_crash_now() {
    std::lock_guard<std::mutex> g(mu_);
    if (!crashed_) crash_locked();
  }

  bool crashed() const {
    std::lock_guard<std::mutex> g(mu_);
    return crashed_;
  }

  std::uint64_t event_count() const {
    std::lock_guard<std::mutex> g(mu_);
    return next_index_;
  }

  /// Stable copy of the captured trace (safe after the engine stopped).
  std::vector<TraceEvent> events() const {
    std::lock_guard<std::mutex> g(mu_);
    return events_;
  }

private:
  void crash_locked() {
    crashed_ = true;
    if (capture_) {
      events_.push_back({next_index_, EventKind::Crash, kNoTxn, 0, 0, 0, {}});
    }
    ++next_index_;
  }

  mutable std::mutex mu_;
  CrashPlan plan_;
  bool capture_;
  bool crashed_ = false;
  std::uint64_t next_index_ = 0;
  std::vector<TraceEvent> events_;
};

} // namespace poplar
