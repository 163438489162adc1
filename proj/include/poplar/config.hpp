#pragma once

#include <chrono>
#include <cstdint>
#include <string>

#include "poplar/common.hpp"

namespace poplar {

/// Deliberately broken engine modes, used only to validate that the
/// verification oracles actually catch real protocol bugs.
enum class BrokenMode {
  None,
  /// Commit queue checks ignore DSN/CSN: transactions are reported committed
  /// as soon as they are enqueued, without waiting for durability.
  SkipDurabilityWait,
  /// SSN allocation ignores the tuple-derived base, so sequence numbers no
  /// longer track WAW/RAW dependencies across buffers.
  IgnoreWawBase,
};

struct Config {
  std::uint32_t num_buffers = 2;
  std::uint64_t buffer_capacity = 30ull << 20;
  std::uint64_t io_unit_size = 16ull << 10;
  std::chrono::microseconds flush_interval{5000};
  double half_full_threshold = 0.5;
  std::uint32_t segment_ring_size = 64;
  std::uint32_t checkpoint_threads = 2;          // n
  std::uint32_t checkpoint_files_per_thread = 2; // m
  std::uint64_t log_rotate_bytes = 256ull << 20;
  std::chrono::microseconds logger_poll{500};

  /// Deterministic mode: no logger threads are spawned; the owner pumps each
  /// logger explicitly. Used by the crash-injection harness and tests.
  bool manual_pump = false;

  /// CENTR baseline: one buffer, one device, sequence numbers from a single
  /// atomic counter, and every transaction committed in total order via Qwr.
  bool centralized = false;

  BrokenMode broken = BrokenMode::None;

  void validate() const {
    if (num_buffers == 0) throw ConfigError("num_buffers must be >= 1");
    if (segment_ring_size < 2) throw ConfigError("segment_ring_size must be >= 2");
    if (io_unit_size == 0 || buffer_capacity == 0)
      throw ConfigError("io_unit_size and buffer_capacity must be nonzero");
    // A full ring of closed segments must fit in the buffer.
    if (io_unit_size > buffer_capacity / segment_ring_size)
      throw ConfigError("io_unit_size must be <= buffer_capacity / segment_ring_size");
    if (half_full_threshold <= 0.0 || half_full_threshold > 1.0)
      throw ConfigError("half_full_threshold must be in (0, 1]");
    if (log_rotate_bytes < buffer_capacity)
      throw ConfigError("log_rotate_bytes must be >= buffer_capacity");
    if (centralized && num_buffers != 1)
      throw ConfigError("the centralized baseline uses exactly one buffer and one device");
    if (checkpoint_threads == 0 || checkpoint_files_per_thread == 0)
      throw ConfigError("checkpoint thread/file counts must be >= 1");
  }
};

} // namespace poplar
