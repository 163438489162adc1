#pragma once

#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "poplar/common.hpp"
#include "poplar/crc32.hpp"

namespace poplar {

/// One log record per transaction, carrying all of its writes.
///
/// Wire format (little-endian, byte-exact; see docs/log-format.md):
///   magic(1) class_flag(1) txn_id(8) ssn(8) entry_count(4) total_len(4)
///   entries: entry_count x { key(8) val_len(4) val_bytes }
///   crc32(4) over all preceding bytes
struct LogRecord {
  Ssn ssn = kNoSsn;
  TxnId txn_id = kNoTxn;
  bool write_only = false;
  std::vector<std::pair<Key, std::string>> entries;

  bool operator==(const LogRecord&) const = default;
};

constexpr unsigned char kRecordMagic = 0xA7;
constexpr std::size_t kRecordHeaderBytes = 1 + 1 + 8 + 8 + 4 + 4;
constexpr std::size_t kRecordEntryOverhead = 8 + 4;
constexpr std::size_t kRecordTrailerBytes = 4;

inline std::size_t serialized_size(const LogRecord& rec) {
  std::size_t n = kRecordHeaderBytes;
  for (const auto& [key, value] : rec.entries) {
    (void)key;
    n += kRecordEntryOverhead + value.size();
  }
  return n + kRecordTrailerBytes;
}

namespace detail {

inline void put_u32(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v);
  p[1] = static_cast<unsigned char>(v >> 8);
  p[2] = static_cast<unsigned char>(v >> 16);
  p[3] = static_cast<unsigned char>(v >> 24);
}

inline void put_u64(unsigned char* p, std::uint64_t v) {
  put_u32(p, static_cast<std::uint32_t>(v));
  put_u32(p + 4, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 |
         static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::uint64_t get_u64(const unsigned char* p) {
  return static_cast<std::uint64_t>(get_u32(p)) |
         static_cast<std::uint64_t>(get_u32(p + 4)) << 32;
}

} // namespace detail

/// Serializes into a caller-provided slot of exactly serialized_size() bytes.
inline void serialize_record_into(const LogRecord& rec,
                                  std::span<unsigned char> out) {
  const std::size_t total = serialized_size(rec);
  if (out.size() != total)
    throw EngineError("serialize_record_into: slot size mismatch");
  unsigned char* p = out.data();
  p[0] = kRecordMagic;
  p[1] = rec.write_only ? 1 : 0;
  detail::put_u64(p + 2, rec.txn_id);
  detail::put_u64(p + 10, rec.ssn);
  detail::put_u32(p + 18, static_cast<std::uint32_t>(rec.entries.size()));
  detail::put_u32(p + 22, static_cast<std::uint32_t>(total));
  std::size_t off = kRecordHeaderBytes;
  for (const auto& [key, value] : rec.entries) {
    detail::put_u64(p + off, key);
    detail::put_u32(p + off + 8, static_cast<std::uint32_t>(value.size()));
    std::memcpy(p + off + 12, value.data(), value.size());
    off += kRecordEntryOverhead + value.size();
  }
  detail::put_u32(p + off, crc32(p, off));
}

inline std::vector<unsigned char> serialize_record(const LogRecord& rec) {
  std::vector<unsigned char> out(serialized_size(rec));
  serialize_record_into(rec, out);
  return out;
}

/// Result of scanning one record off a byte stream. A torn record is the
/// normal end-of-durable-prefix signal during recovery, not a fault.
struct ScanResult {
  bool torn = true;
  std::size_t consumed = 0;
  LogRecord record;
};

/// Parses a record starting at bytes[0]. Returns torn=true if the bytes are
/// truncated, the magic or checksum fails, or any length field is
/// inconsistent.
inline ScanResult deserialize_record(std::span<const unsigned char> bytes) {
  ScanResult res;
  if (bytes.size() < kRecordHeaderBytes) return res;
  const unsigned char* p = bytes.data();
  if (p[0] != kRecordMagic) return res;
  const std::uint32_t entry_count = detail::get_u32(p + 18);
  const std::uint32_t total = detail::get_u32(p + 22);
  if (total < kRecordHeaderBytes + kRecordTrailerBytes) return res;
  if (total > bytes.size()) return res;
  const std::uint32_t stored_crc = detail::get_u32(p + total - 4);
  if (crc32(p, total - 4) != stored_crc) return res;

  LogRecord rec;
  rec.write_only = p[1] != 0;
  rec.txn_id = detail::get_u64(p + 2);
  rec.ssn = detail::get_u64(p + 10);
  rec.entries.reserve(entry_count);
  std::size_t off = kRecordHeaderBytes;
  for (std::uint32_t i = 0; i < entry_count; ++i) {
    if (off + kRecordEntryOverhead > total - kRecordTrailerBytes) return res;
    const Key key = detail::get_u64(p + off);
    const std::uint32_t len = detail::get_u32(p + off + 8);
    if (off + kRecordEntryOverhead + len > total - kRecordTrailerBytes) return res;
    rec.entries.emplace_back(
        key, std::string(reinterpret_cast<const char*>(p + off + 12), len));
    off += kRecordEntryOverhead + len;
  }
  if (off != total - kRecordTrailerBytes) return res;
  res.torn = false;
  res.consumed = total;
  res.record = std::move(rec);
  return res;
}

} // namespace poplar
