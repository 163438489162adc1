#pragma once

#include <cinttypes>
#include <cstdio>
#include <optional>
#include <span>
#include <string>

#include "poplar/common.hpp"
#include "poplar/device.hpp"
#include "poplar/storage.hpp"

namespace poplar {

inline std::string wal_file_name(std::uint32_t buffer, std::uint64_t seq) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "wal-%u-%06" PRIu64 ".log", buffer, seq);
  return buf;
}

inline std::string wal_file_prefix(std::uint32_t buffer) {
  return "wal-" + std::to_string(buffer) + "-";
}

struct WalFileName {
  std::uint32_t buffer = 0;
  std::uint64_t seq = 0;
};

inline std::optional<WalFileName> parse_wal_file_name(const std::string& name) {
  WalFileName out;
  char tail[8] = {0};
  if (std::sscanf(name.c_str(), "wal-%u-%" SCNu64 ".lo%1s", &out.buffer,
                  &out.seq, tail) != 3 ||
      tail[0] != 'g')
    return std::nullopt;
  return out;
}

/// Append channel for one buffer's log: rotates to a numbered fresh file
/// when the size limit is reached. Each run starts a new file; keeping files
/// moderately sized keeps the recovery tail scan short.
class LogWriter {
public:
  LogWriter(Storage& storage, Device& device, std::uint32_t buffer_id,
            std::uint64_t rotate_bytes)
      : storage_(storage), device_(device), buffer_id_(buffer_id),
        rotate_bytes_(rotate_bytes) {
    std::uint64_t next = 0;
    for (const auto& name : storage_.list(wal_file_prefix(buffer_id_))) {
      if (auto parsed = parse_wal_file_name(name)) {
        next = std::max(next, parsed->seq + 1);
      }
    }
    seq_ = next;
    open_current();
  }

  void append(std::span<const unsigned char> bytes) {
    if (current_bytes_ > 0 && current_bytes_ + bytes.size() > rotate_bytes_) {
      ++seq_;
      current_bytes_ = 0;
      open_current();
    }
    device_.append_and_sync(bytes);
    current_bytes_ += bytes.size();
  }

  std::uint64_t current_seq() const { return seq_; }

private:
  void open_current() { device_.open_file(wal_file_name(buffer_id_, seq_)); }

  Storage& storage_;
  Device& device_;
  std::uint32_t buffer_id_;
  std::uint64_t rotate_bytes_;
  std::uint64_t seq_ = 0;
  std::uint64_t current_bytes_ = 0;
};

} // namespace poplar
