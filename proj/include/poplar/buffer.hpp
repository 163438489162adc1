#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <functional>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "poplar/common.hpp"
#include "poplar/config.hpp"

namespace poplar {

/// Hole-tracking and flush unit of a log buffer. Offsets are virtual
/// (monotone); physical position is offset % capacity. end_offset is set at
/// close time and marks where the next segment begins, including any padding
/// skipped at a ring-wrap boundary.
struct Segment {
  Ssn ssn = kNoSsn;
  std::atomic<std::uint64_t> allocated_bytes{0};
  std::atomic<std::uint64_t> buffered_bytes{0};
  std::uint64_t start_offset = 0;
  std::uint64_t end_offset = 0;
  std::atomic<bool> closed{false};

  void reset() {
    ssn = kNoSsn;
    allocated_bytes.store(0, std::memory_order_relaxed);
    buffered_bytes.store(0, std::memory_order_relaxed);
    start_offset = 0;
    end_offset = 0;
    closed.store(false, std::memory_order_relaxed);
  }
};

struct Reservation {
  Ssn ssn = kNoSsn;
  std::uint64_t offset = 0; // virtual
  std::uint32_t slot = 0;   // segment ring slot covering this record
  std::uint64_t len = 0;
};

struct FlushJob {
  std::uint32_t slot = 0;
  std::uint64_t phys_offset = 0;
  std::uint64_t len = 0;
  Ssn ssn = kNoSsn;
  std::uint64_t end_offset = 0;
};

/// One log buffer: the buffer-level SSN state (ssn/offset/latch), the byte
/// ring, the segment index with its generate/flush cursors, and the durable
/// SSN. Many workers allocate and copy concurrently; one logger thread owns
/// flushing.
class LogBuffer {
public:
  LogBuffer(std::uint32_t id, const Config& cfg, InvariantCounters& counters,
            std::atomic<Ssn>* central_counter = nullptr)
      : id_(id), capacity_(cfg.buffer_capacity), io_unit_(cfg.io_unit_size),
        half_full_bytes_(static_cast<std::uint64_t>(
            cfg.half_full_threshold * static_cast<double>(cfg.buffer_capacity))),
        ring_size_(cfg.segment_ring_size), counters_(counters),
        central_counter_(central_counter), ring_(cfg.buffer_capacity),
        segments_(cfg.segment_ring_size) {}

  std::uint32_t id() const { return id_; }
  std::uint64_t capacity() const { return capacity_; }

  void set_stall_hook(std::function<void(std::uint32_t)> hook) {
    stall_hook_ = std::move(hook);
  }

  /// Algorithm 1 under the latch: assigns ssn = max(base, L.ssn) + 1,
  /// advances the buffer SSN, and reserves a physically contiguous slot of
  /// `len` bytes. Blocks (sleep-yield via the stall hook) when the ring has
  /// insufficient free space; the logger drains it independently.
  /// `stall_ns`, when given, accumulates time spent waiting for buffer space.
  Reservation allocate(Ssn base, std::uint64_t len,
                       std::uint64_t* stall_ns = nullptr) {
    if (len > capacity_)
      throw EngineError("log record larger than buffer capacity");
    latch_.lock();
    for (;;) {
      const std::uint64_t off = offset_.load(std::memory_order_relaxed);
      if (off + len - flushed_offset_.load(std::memory_order_acquire) >
          capacity_) {
        latch_.unlock();
        stall(stall_ns);
        latch_.lock();
        continue;
      }
      const std::uint64_t phys = off % capacity_;
      if (phys + len > capacity_) {
        // Record may not wrap: close at the physical end and restart the
        // segment at the next capacity boundary.
        close_open_locked(off - phys + capacity_, stall_ns);
        continue;
      }
      break;
    }

    // An oversized record gets its own segment.
    if (len >= io_unit_ && open_segment().allocated_bytes.load(
                               std::memory_order_relaxed) > 0) {
      close_open_locked(offset_.load(std::memory_order_relaxed), stall_ns);
    }

    Ssn next;
    const Ssn prev = ssn_.load(std::memory_order_relaxed);
    if (central_counter_) {
      next = central_counter_->fetch_add(1, std::memory_order_relaxed) + 1;
    } else {
      next = std::max(base, prev) + 1;
    }
    if (next <= prev)
      counters_.buffer_ssn_regressions.fetch_add(1, std::memory_order_relaxed);
    ssn_.store(next, std::memory_order_relaxed);

    Reservation res;
    res.ssn = next;
    res.offset = offset_.load(std::memory_order_relaxed);
    res.len = len;
    res.slot = static_cast<std::uint32_t>(
        cur_generate_.load(std::memory_order_relaxed) % ring_size_);
    offset_.store(res.offset + len, std::memory_order_relaxed);
    Segment& seg = segments_[res.slot];
    seg.allocated_bytes.fetch_add(len, std::memory_order_relaxed);

    const std::uint64_t now_off = offset_.load(std::memory_order_relaxed);
    if (seg.allocated_bytes.load(std::memory_order_relaxed) >= io_unit_ ||
        now_off - flushed_offset_.load(std::memory_order_acquire) >=
            half_full_bytes_) {
      close_open_locked(now_off, stall_ns);
    }
    latch_.unlock();
    return res;
  }

  std::span<unsigned char> slot_span(const Reservation& res) {
    return {ring_.data() + res.offset % capacity_, res.len};
  }

  /// Completes the copy into the reserved slot. The release increment is
  /// what publishes the bytes to the logger.
  void mark_inserted(const Reservation& res) {
    segments_[res.slot].buffered_bytes.fetch_add(res.len,
                                                 std::memory_order_release);
  }

  void insert(const Reservation& res, std::span<const unsigned char> bytes) {
    if (bytes.size() != res.len) throw EngineError("insert length mismatch");
    std::memcpy(ring_.data() + res.offset % capacity_, bytes.data(),
                bytes.size());
    mark_inserted(res);
  }

  /// Logger-side establishment when the flush timer expires. Skips an empty
  /// segment. Uses try_lock so a stalled worker holding the latch can still
  /// be drained.
  bool timer_establish() {
    if (!latch_.try_lock()) return false;
    bool closed = false;
    Segment& seg = open_segment();
    if (seg.allocated_bytes.load(std::memory_order_relaxed) > 0 &&
        !seg.closed.load(std::memory_order_relaxed)) {
      close_open_locked(offset_.load(std::memory_order_relaxed), nullptr);
      closed = true;
    }
    latch_.unlock();
    return closed;
  }

  /// Front segment of the ring if it is flushable: closed and hole-free.
  std::optional<FlushJob> peek_flushable() {
    const std::uint64_t cur = cur_flush_.load(std::memory_order_relaxed);
    Segment& seg = segments_[cur % ring_size_];
    if (!seg.closed.load(std::memory_order_acquire)) return std::nullopt;
    const auto allocated = seg.allocated_bytes.load(std::memory_order_relaxed);
    if (seg.buffered_bytes.load(std::memory_order_acquire) != allocated)
      return std::nullopt;
    FlushJob job;
    job.slot = static_cast<std::uint32_t>(cur % ring_size_);
    job.phys_offset = seg.start_offset % capacity_;
    job.len = allocated;
    job.ssn = seg.ssn;
    job.end_offset = seg.end_offset;
    return job;
  }

  std::span<const unsigned char> flush_bytes(const FlushJob& job) const {
    return {ring_.data() + job.phys_offset, job.len};
  }

  /// Called by the logger after the device barrier completed: advances the
  /// DSN, reclaims ring space, recycles the segment, then publishes the
  /// cursor. The segment is reset before the cursor moves so a worker can
  /// never see a recycled-but-dirty slot.
  void complete_flush(const FlushJob& job) {
    Segment& seg = segments_[job.slot];
    if (!seg.closed.load(std::memory_order_relaxed) ||
        seg.buffered_bytes.load(std::memory_order_relaxed) !=
            seg.allocated_bytes.load(std::memory_order_relaxed)) {
      counters_.flush_gate_violations.fetch_add(1, std::memory_order_relaxed);
    }
    if (job.ssn < dsn_.load(std::memory_order_relaxed))
      counters_.dsn_regressions.fetch_add(1, std::memory_order_relaxed);
    dsn_.store(job.ssn, std::memory_order_release);
    flushed_offset_.store(job.end_offset, std::memory_order_release);
    seg.reset();
    cur_flush_.fetch_add(1, std::memory_order_release);
  }

  /// Raises the buffer SSN toward the global maximum and, when every
  /// allocated byte is already durable, lifts the DSN with it. This is what
  /// lets the CSN advance past buffers that are idle, so queued readers are
  /// not stalled forever by a quiet buffer. Only the owning logger may call.
  std::optional<Ssn> idle_advance(Ssn global_max_ssn) {
    if (!drained()) return std::nullopt;
    if (!latch_.try_lock()) return std::nullopt;
    std::optional<Ssn> advanced;
    if (drained()) {
      const Ssn cur = ssn_.load(std::memory_order_relaxed);
      const Ssn target = std::max(cur, global_max_ssn);
      if (target > cur) ssn_.store(target, std::memory_order_relaxed);
      if (target > dsn_.load(std::memory_order_relaxed)) {
        dsn_.store(target, std::memory_order_release);
        advanced = target;
      }
    }
    latch_.unlock();
    return advanced;
  }

  bool drained() const {
    return offset_.load(std::memory_order_acquire) ==
               flushed_offset_.load(std::memory_order_acquire) &&
           open_segment_allocated() == 0;
  }

  Ssn dsn() const { return dsn_.load(std::memory_order_acquire); }
  Ssn current_ssn() const { return ssn_.load(std::memory_order_acquire); }

  /// Restart seeding: new allocations must exceed all recovered history.
  void seed_ssn(Ssn floor) {
    latch_.lock();
    if (floor > ssn_.load(std::memory_order_relaxed))
      ssn_.store(floor, std::memory_order_relaxed);
    latch_.unlock();
  }

  std::uint64_t pending_bytes() const {
    return offset_.load(std::memory_order_acquire) -
           flushed_offset_.load(std::memory_order_acquire);
  }

  std::uint64_t generate_cursor() const { return cur_generate_.load(); }
  std::uint64_t flush_cursor() const { return cur_flush_.load(); }
  const Segment& segment(std::uint32_t slot) const { return segments_[slot]; }

private:
  Segment& open_segment() {
    return segments_[cur_generate_.load(std::memory_order_relaxed) %
                     ring_size_];
  }
  std::uint64_t open_segment_allocated() const {
    return segments_[cur_generate_.load(std::memory_order_acquire) % ring_size_]
        .allocated_bytes.load(std::memory_order_acquire);
  }

  /// Latch held. Closes the currently generating segment, stamping it with
  /// the buffer SSN, and opens the successor at `new_end`. For an empty
  /// segment this just relocates its start (ring-wrap padding).
  void close_open_locked(std::uint64_t new_end, std::uint64_t* stall_ns) {
    const std::uint64_t gen = cur_generate_.load(std::memory_order_relaxed);
    Segment& seg = segments_[gen % ring_size_];
    if (seg.allocated_bytes.load(std::memory_order_relaxed) == 0) {
      seg.start_offset = new_end;
      offset_.store(new_end, std::memory_order_relaxed);
      return;
    }
    // Wait for the successor slot to be recycled (RingFull). The logger
    // flushes without the latch, so this always makes progress.
    while (gen + 1 - cur_flush_.load(std::memory_order_acquire) >= ring_size_) {
      stall(stall_ns);
    }
    if (seg.closed.load(std::memory_order_relaxed))
      counters_.segment_state_violations.fetch_add(1, std::memory_order_relaxed);
    seg.ssn = ssn_.load(std::memory_order_relaxed);
    seg.end_offset = new_end;
    offset_.store(new_end, std::memory_order_relaxed);
    Segment& next = segments_[(gen + 1) % ring_size_];
    next.start_offset = new_end;
    seg.closed.store(true, std::memory_order_release);
    cur_generate_.fetch_add(1, std::memory_order_release);
  }

  void stall(std::uint64_t* stall_ns) {
    const auto t0 = std::chrono::steady_clock::now();
    if (stall_hook_) {
      stall_hook_(id_);
    } else {
      std::this_thread::yield();
    }
    if (stall_ns) {
      *stall_ns += static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(
              std::chrono::steady_clock::now() - t0)
              .count());
    }
  }

  const std::uint32_t id_;
  const std::uint64_t capacity_;
  const std::uint64_t io_unit_;
  const std::uint64_t half_full_bytes_;
  const std::uint32_t ring_size_;
  InvariantCounters& counters_;
  std::atomic<Ssn>* central_counter_;

  SpinLatch latch_;
  std::atomic<Ssn> ssn_{kNoSsn};
  std::atomic<std::uint64_t> offset_{0};
  std::atomic<std::uint64_t> flushed_offset_{0};
  std::atomic<Ssn> dsn_{kNoSsn};
  std::atomic<std::uint64_t> cur_generate_{0};
  std::atomic<std::uint64_t> cur_flush_{0};
  std::vector<unsigned char> ring_;
  std::vector<Segment> segments_;
  std::function<void(std::uint32_t)> stall_hook_;
};

} // namespace poplar
