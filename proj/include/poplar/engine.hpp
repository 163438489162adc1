#pragma once

#include <atomic>
#include <chrono>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "poplar/buffer.hpp"
#include "poplar/commit.hpp"
#include "poplar/config.hpp"
#include "poplar/device.hpp"
#include "poplar/record.hpp"
#include "poplar/sequence.hpp"
#include "poplar/storage.hpp"
#include "poplar/table.hpp"
#include "poplar/trace.hpp"
#include "poplar/txn.hpp"
#include "poplar/wal.hpp"

namespace poplar {

class Engine;

struct WorkerStats {
  std::uint64_t txns_committed = 0;
  std::uint64_t txns_aborted = 0;
  std::uint64_t contention_ns = 0; // sequence number allocation
  std::uint64_t logwork_ns = 0;    // record insert + waiting for buffer space
  std::uint64_t total_ns = 0;
};

/// One worker's view of the engine: OCC read/validation/write phases plus
/// its two private commit queues. A Worker is confined to one thread (or to
/// the single-threaded deterministic driver).
class Worker {
public:
  Transaction begin();
  std::optional<std::string> read(Transaction& txn, Key key);
  bool write(Transaction& txn, Key key, std::string value);

  /// Ordered range read of `count` tuples starting at the first key >=
  /// `start`. Every scanned tuple enters the read set.
  std::optional<std::vector<std::pair<Key, std::string>>>
  scan(Transaction& txn, Key start, std::size_t count);

  /// Validation phase: locks the write set in ascending key order, then
  /// checks that no read-set tuple is locked by another transaction or was
  /// restamped since it was read. Abort is a normal outcome; all acquired
  /// locks are released on abort.
  bool validate(Transaction& txn);

  /// Prepare stage: allocates the SSN with the buffer slot, applies and
  /// stamps the write set, releases write locks early, copies the log record
  /// into the buffer, and enqueues the transaction for commit.
  void precommit(Transaction& txn);

  /// Commit stage: pops every Qww head with ssn <= mapped buffer DSN and
  /// every Qwr head with ssn <= CSN. Returns the committed entries.
  std::vector<CommitEntry> try_commit();

  std::size_t pending() const { return queues_.pending(); }
  std::uint32_t buffer_id() const { return buffer_id_; }
  std::uint32_t id() const { return worker_id_; }
  WorkerStats& stats() { return stats_; }

private:
  friend class Engine;
  Worker(Engine& engine, std::uint32_t worker_id, std::uint32_t buffer_id)
      : engine_(engine), worker_id_(worker_id), buffer_id_(buffer_id) {}

  void abort_locked(Transaction& txn, std::vector<Tuple*>& held);

  Engine& engine_;
  std::uint32_t worker_id_;
  std::uint32_t buffer_id_;
  std::uint64_t next_seq_ = 0;
  CommitQueues queues_;
  Ssn last_write_enqueue_ssn_ = 0;
  WorkerStats stats_;
};

/// The logging engine: table, log buffers, devices, logger threads and the
/// commit coordinator. Workers are created against it and drive transactions
/// through the prepare / persistence / commit pipeline.
class Engine {
public:
  Engine(Config cfg, Storage& storage, Table table,
         std::vector<std::unique_ptr<Device>> devices,
         VerifyHooks* hooks = nullptr)
      : cfg_(cfg), storage_(storage), table_(std::move(table)),
        devices_(std::move(devices)), hooks_(hooks) {
    cfg_.validate();
    if (devices_.size() != cfg_.num_buffers)
      throw ConfigError("need exactly one device per log buffer");
    if (cfg_.centralized) central_counter_ = std::make_unique<std::atomic<Ssn>>(0);
    buffers_.reserve(cfg_.num_buffers);
    writers_.reserve(cfg_.num_buffers);
    for (std::uint32_t i = 0; i < cfg_.num_buffers; ++i) {
      buffers_.push_back(std::make_unique<LogBuffer>(
          i, cfg_, counters_, central_counter_.get()));
      writers_.push_back(std::make_unique<LogWriter>(
          storage_, *devices_[i], i, cfg_.log_rotate_bytes));
      last_timer_.push_back(std::chrono::steady_clock::now());
    }
    coordinator_ = std::make_unique<CommitCoordinator>(buffers_, counters_);
    for (auto& b : buffers_) {
      if (cfg_.manual_pump) {
        b->set_stall_hook([this](std::uint32_t) { pump_all(true); });
      } else {
        b->set_stall_hook([](std::uint32_t) {
          std::this_thread::sleep_for(std::chrono::microseconds(20));
        });
      }
    }
  }

  ~Engine() { stop(); }

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  void start() {
    if (cfg_.manual_pump || running_) return;
    running_ = true;
    for (std::uint32_t i = 0; i < cfg_.num_buffers; ++i) {
      logger_threads_.emplace_back([this, i] { logger_loop(i); });
    }
  }

  void stop() {
    running_ = false;
    for (auto& t : logger_threads_) {
      if (t.joinable()) t.join();
    }
    logger_threads_.clear();
  }

  Worker* make_worker() {
    const auto id = static_cast<std::uint32_t>(workers_.size());
    workers_.push_back(
        std::unique_ptr<Worker>(new Worker(*this, id, id % cfg_.num_buffers)));
    return workers_.back().get();
  }

  /// One pass of the logger procedure for buffer i: establish on timer,
  /// flush every hole-free closed segment in ring order, lift an idle
  /// buffer's DSN, then advance the CSN.
  void pump_logger(std::uint32_t i, bool establish_now) {
    check_halted();
    auto& buf = *buffers_[i];
    if (establish_now) buf.timer_establish();
    while (auto job = buf.peek_flushable()) {
      writers_[i]->append(buf.flush_bytes(*job));
      emit_or_halt(EventKind::Durable, kNoTxn, 0, job->ssn, i);
      buf.complete_flush(*job);
    }
    if (auto lifted = buf.idle_advance(max_buffer_ssn())) {
      emit_or_halt(EventKind::Durable, kNoTxn, 0, *lifted, i);
    }
    coordinator_->advance();
  }

  void pump_all(bool establish_now) {
    for (std::uint32_t i = 0; i < cfg_.num_buffers; ++i)
      pump_logger(i, establish_now);
  }

  /// Deterministic-mode drain: pump and commit until every queue is empty.
  bool drain(int max_rounds = 100000) {
    for (int r = 0; r < max_rounds; ++r) {
      if (cfg_.manual_pump) pump_all(true);
      bool empty = true;
      for (auto& w : workers_) {
        w->try_commit();
        empty = empty && w->pending() == 0;
      }
      if (empty) return true;
      if (!cfg_.manual_pump)
        std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
    return false;
  }

  /// Appends a durable no-op record to every buffer, advancing all buffer
  /// SSNs past every existing sequence number. Used by checkpoint validation
  /// to outrun the largest observed SSN on a quiet system.
  void emit_barrier() {
    check_halted();
    LogRecord rec;
    rec.txn_id = kBarrierTxn;
    rec.write_only = true;
    for (auto& buf : buffers_) {
      rec.ssn = 1; // placeholder for sizing; patched below
      const auto len = serialized_size(rec);
      const Reservation res = buf->allocate(kNoSsn, len);
      rec.ssn = res.ssn;
      serialize_record_into(rec, buf->slot_span(res));
      emit_or_halt(EventKind::Insert, kBarrierTxn, 0, res.ssn, buf->id());
      buf->mark_inserted(res);
    }
  }

  Table& table() { return table_; }
  const Config& cfg() const { return cfg_; }
  Storage& storage() { return storage_; }
  InvariantCounters& counters() { return counters_; }
  CommitCoordinator& coordinator() { return *coordinator_; }
  LogBuffer& buffer(std::uint32_t i) { return *buffers_[i]; }
  Device& device(std::uint32_t i) { return *devices_[i]; }
  std::uint32_t num_buffers() const { return cfg_.num_buffers; }
  Ssn csn() const { return coordinator_->csn(); }
  VerifyHooks* hooks() { return hooks_; }

  bool halted() const { return hooks_ && hooks_->crashed(); }

  Ssn max_buffer_ssn() const {
    Ssn m = kNoSsn;
    for (const auto& b : buffers_) m = std::max(m, b->current_ssn());
    return m;
  }

  /// Restart seeding so new allocations exceed all recovered history.
  void seed_ssn(Ssn floor) {
    for (auto& b : buffers_) b->seed_ssn(floor);
  }

  std::uint64_t flushed_bytes(std::uint32_t i) const {
    return devices_[i]->bytes_written();
  }

private:
  friend class Worker;

  void check_halted() const {
    if (hooks_ && hooks_->crashed()) throw EngineHalted();
  }

  void emit_or_halt(EventKind kind, TxnId txn, Key key, Ssn ssn,
                    std::uint32_t buffer, std::string value = {}) {
    if (!hooks_) return;
    if (!hooks_->emit(kind, txn, key, ssn, buffer, std::move(value)))
      throw EngineHalted();
  }

  void logger_loop(std::uint32_t i) {
    while (running_) {
      const auto now = std::chrono::steady_clock::now();
      bool establish = false;
      if (now - last_timer_[i] >= cfg_.flush_interval) {
        establish = true;
        last_timer_[i] = now;
      }
      try {
        pump_logger(i, establish);
      } catch (const EngineHalted&) {
        return;
      }
      std::this_thread::sleep_for(cfg_.logger_poll);
    }
    // Final sweep so a clean shutdown leaves nothing buffered.
    try {
      pump_logger(i, true);
    } catch (const EngineHalted&) {
    }
  }

  Config cfg_;
  Storage& storage_;
  Table table_;
  std::vector<std::unique_ptr<Device>> devices_;
  VerifyHooks* hooks_;
  InvariantCounters counters_;
  std::unique_ptr<std::atomic<Ssn>> central_counter_;
  std::vector<std::unique_ptr<LogBuffer>> buffers_;
  std::vector<std::unique_ptr<LogWriter>> writers_;
  std::vector<std::chrono::steady_clock::time_point> last_timer_;
  std::unique_ptr<CommitCoordinator> coordinator_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::vector<std::thread> logger_threads_;
  std::atomic<bool> running_{false};
};

// ---------------------------------------------------------------------------
// Worker implementation

inline Transaction Worker::begin() {
  engine_.check_halted();
  Transaction txn;
  txn.id = (static_cast<TxnId>(worker_id_) << 40) | ++next_seq_;
  txn.buffer_id = buffer_id_;
  txn.state = TxnState::Active;
  txn.begin_at = std::chrono::steady_clock::now();
  return txn;
}

inline std::optional<std::string> Worker::read(Transaction& txn, Key key) {
  engine_.check_halted();
  if (auto it = txn.write_set.find(key); it != txn.write_set.end()) {
    return it->second; // read-own-writes; no read-set entry
  }
  Tuple* tuple = engine_.table_.lookup(key);
  if (!tuple) return std::nullopt;
  auto [value, ssn] = tuple->read_consistent();
  if (txn.read_set.emplace(key, ssn).second) {
    engine_.emit_or_halt(EventKind::Read, txn.id, key, ssn, buffer_id_);
  }
  return value;
}

inline bool Worker::write(Transaction& txn, Key key, std::string value) {
  engine_.check_halted();
  if (!engine_.table_.lookup(key)) return false;
  txn.write_set[key] = std::move(value);
  return true;
}

inline std::optional<std::vector<std::pair<Key, std::string>>>
Worker::scan(Transaction& txn, Key start, std::size_t count) {
  engine_.check_halted();
  std::vector<std::pair<Key, std::string>> out;
  auto& table = engine_.table_;
  std::size_t idx = table.lower_bound(start);
  for (std::size_t n = 0; n < count && idx < table.size(); ++n, ++idx) {
    const Key key = table.key_at(idx);
    auto value = read(txn, key);
    if (!value) return std::nullopt;
    out.emplace_back(key, std::move(*value));
  }
  return out;
}

inline void Worker::abort_locked(Transaction& txn, std::vector<Tuple*>& held) {
  for (auto* t : held) t->unlock(txn.id);
  held.clear();
  txn.state = TxnState::Aborted;
  ++stats_.txns_aborted;
  engine_.emit_or_halt(EventKind::Abort, txn.id, 0, txn.ssn, buffer_id_);
}

inline bool Worker::validate(Transaction& txn) {
  engine_.check_halted();
  std::vector<Tuple*> held;
  held.reserve(txn.write_set.size());
  // Write locks in ascending primary-key order (std::map iterates sorted).
  for (const auto& [key, value] : txn.write_set) {
    (void)value;
    Tuple* tuple = engine_.table_.lookup(key);
    if (!tuple || !tuple->lock_bounded(txn.id)) {
      abort_locked(txn, held);
      return false;
    }
    held.push_back(tuple);
  }
  for (const auto& [key, observed] : txn.read_set) {
    const Tuple* tuple = engine_.table_.lookup(key);
    if (!tuple) {
      abort_locked(txn, held);
      return false;
    }
    const TxnId holder = tuple->lock_holder();
    if (holder != kNoTxn && holder != txn.id) {
      abort_locked(txn, held);
      return false;
    }
    if (tuple->ssn() != observed) {
      abort_locked(txn, held);
      return false;
    }
  }
  txn.state = TxnState::Validated;
  return true;
}

inline void Worker::precommit(Transaction& txn) {
  engine_.check_halted();
  if (txn.state != TxnState::Validated)
    throw EngineError("precommit requires a validated transaction");
  auto& counters = engine_.counters_;
  const auto enqueue = [this, &txn](bool has_writes) {
    CommitEntry e;
    e.txn = txn.id;
    e.ssn = txn.ssn;
    e.has_writes = has_writes;
    e.begin_at = txn.begin_at;
    e.enqueued_at = std::chrono::steady_clock::now();
    if (has_writes) {
      if (txn.ssn < last_write_enqueue_ssn_)
        engine_.counters_.queue_order_violations.fetch_add(
            1, std::memory_order_relaxed);
      last_write_enqueue_ssn_ = txn.ssn;
    }
    if (txn.cls() == TxnClass::WriteOnly) {
      queues_.qww.push_back(std::move(e));
    } else {
      queues_.qwr.push_back(std::move(e));
    }
  };

  if (txn.cls() == TxnClass::ReadOnly) {
    // No buffer slot, no stamping: the transaction's SSN is its base, and it
    // commits once the CSN shows all its RAW predecessors durable.
    if (engine_.central_counter_) {
      txn.ssn = engine_.central_counter_->load(std::memory_order_acquire);
    } else {
      allocate_readonly_ssn(txn, engine_.table_);
    }
    txn.state = TxnState::PreCommitted;
    enqueue(false);
    return;
  }

  LogRecord rec;
  rec.txn_id = txn.id;
  rec.write_only = txn.cls() == TxnClass::WriteOnly;
  rec.entries.reserve(txn.write_set.size());
  for (const auto& [key, value] : txn.write_set) rec.entries.emplace_back(key, value);
  const std::uint64_t len = serialized_size(rec);

  const Ssn base = engine_.cfg_.broken == BrokenMode::IgnoreWawBase
                       ? kNoSsn
                       : compute_base(txn, engine_.table_);

  LogBuffer& buf = engine_.buffer(buffer_id_);
  std::uint64_t stall_ns = 0;
  const auto t0 = std::chrono::steady_clock::now();
  const Reservation res = buf.allocate(base, len, &stall_ns);
  const auto t1 = std::chrono::steady_clock::now();
  txn.ssn = res.ssn;
  rec.ssn = res.ssn;

  // RAW strictness: a writer's SSN exceeds every version it read.
  for (const auto& [key, observed] : txn.read_set) {
    (void)key;
    if (txn.ssn <= observed)
      counters.raw_violations.fetch_add(1, std::memory_order_relaxed);
  }

  // Write phase: install values stamped with the new SSN, then release all
  // write locks (early lock release) before the record is even copied.
  for (const auto& [key, value] : txn.write_set) {
    Tuple* tuple = engine_.table_.lookup(key);
    if (txn.ssn <= tuple->ssn())
      counters.waw_violations.fetch_add(1, std::memory_order_relaxed);
    engine_.emit_or_halt(EventKind::WriteApply, txn.id, key, txn.ssn,
                         buffer_id_, value);
    tuple->apply(value, txn.ssn, &counters);
  }
  for (const auto& [key, value] : txn.write_set) {
    (void)value;
    engine_.table_.lookup(key)->unlock(txn.id);
  }

  serialize_record_into(rec, buf.slot_span(res));
  engine_.emit_or_halt(EventKind::Insert, txn.id, 0, txn.ssn, buffer_id_);
  buf.mark_inserted(res);
  const auto t2 = std::chrono::steady_clock::now();

  // Waiting for buffer space counts as log work, not allocation contention.
  const auto alloc_ns = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  stats_.contention_ns += alloc_ns - std::min(alloc_ns, stall_ns);
  stats_.logwork_ns +=
      stall_ns +
      static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(t2 - t1).count());

  txn.state = TxnState::PreCommitted;
  enqueue(true);
}

inline std::vector<CommitEntry> Worker::try_commit() {
  engine_.check_halted();
  std::vector<CommitEntry> committed;
  const bool skip_wait = engine_.cfg_.broken == BrokenMode::SkipDurabilityWait;
  const Ssn gate_ww = skip_wait ? std::numeric_limits<Ssn>::max()
                                : engine_.buffer(buffer_id_).dsn();
  while (!queues_.qww.empty() && queues_.qww.front().ssn <= gate_ww) {
    engine_.emit_or_halt(EventKind::Commit, queues_.qww.front().txn, 0,
                         queues_.qww.front().ssn, buffer_id_);
    committed.push_back(queues_.qww.front());
    queues_.qww.pop_front();
  }
  const Ssn gate_wr = skip_wait ? std::numeric_limits<Ssn>::max()
                                : engine_.coordinator().csn();
  while (!queues_.qwr.empty() && queues_.qwr.front().ssn <= gate_wr) {
    engine_.emit_or_halt(EventKind::Commit, queues_.qwr.front().txn, 0,
                         queues_.qwr.front().ssn, buffer_id_);
    committed.push_back(queues_.qwr.front());
    queues_.qwr.pop_front();
  }
  stats_.txns_committed += committed.size();
  return committed;
}

} // namespace poplar
