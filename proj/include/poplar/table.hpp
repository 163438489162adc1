#pragma once

#include <algorithm>
#include <atomic>
#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "poplar/common.hpp"

namespace poplar {

/// Per-tuple header plus value bytes. The value buffer has fixed capacity so
/// lock-free readers can copy it and validate against (lock, ssn) without
/// chasing reallocated pointers.
class Tuple {
public:
  Tuple(std::string_view initial, std::uint32_t capacity)
      : capacity_(capacity), data_(new char[capacity]) {
    if (initial.size() > capacity_) throw EngineError("value exceeds tuple capacity");
    std::memcpy(data_.get(), initial.data(), initial.size());
    len_ = static_cast<std::uint32_t>(initial.size());
  }

  Ssn ssn() const { return ssn_.load(std::memory_order_acquire); }
  TxnId lock_holder() const { return lock_.load(std::memory_order_acquire); }

  bool try_lock(TxnId txn) {
    TxnId expect = kNoTxn;
    return lock_.compare_exchange_strong(expect, txn, std::memory_order_acquire);
  }

  /// Bounded spin; gives up after `budget` rounds so validation can abort
  /// instead of deadlocking.
  bool lock_bounded(TxnId txn, int budget = 512) {
    for (int i = 0; i < budget; ++i) {
      if (try_lock(txn)) return true;
      if (i % 16 == 15) std::this_thread::yield();
    }
    return false;
  }

  void unlock(TxnId txn) {
    TxnId expect = txn;
    if (!lock_.compare_exchange_strong(expect, kNoTxn, std::memory_order_release))
      throw EngineError("unlock by non-holder");
  }

  /// Installs a new version. Caller must hold the lock; the ssn store is the
  /// release point readers validate against.
  void apply(std::string_view value, Ssn new_ssn, InvariantCounters* counters) {
    if (value.size() > capacity_) throw EngineError("value exceeds tuple capacity");
    if (counters && new_ssn <= ssn_.load(std::memory_order_relaxed))
      counters->tuple_ssn_regressions.fetch_add(1, std::memory_order_relaxed);
    std::memcpy(data_.get(), value.data(), value.size());
    len_ = static_cast<std::uint32_t>(value.size());
    ssn_.store(new_ssn, std::memory_order_release);
  }

  /// Snapshot of (value, ssn) consistent as a pair. Spins while a writer
  /// holds the lock or mutates the version underneath the copy.
  std::pair<std::string, Ssn> read_consistent() const {
    for (int spins = 0;; ++spins) {
      const Ssn before = ssn_.load(std::memory_order_acquire);
      if (lock_.load(std::memory_order_acquire) == kNoTxn) {
        std::string out(data_.get(), len_);
        std::atomic_thread_fence(std::memory_order_acquire);
        if (ssn_.load(std::memory_order_relaxed) == before &&
            lock_.load(std::memory_order_relaxed) == kNoTxn) {
          return {std::move(out), before};
        }
      }
      if (spins % 32 == 31) std::this_thread::yield();
    }
  }

  /// Used by checkpoint scans, which take the lock and so need no seqlock.
  std::pair<std::string, Ssn> read_locked() const {
    return {std::string(data_.get(), len_),
            ssn_.load(std::memory_order_relaxed)};
  }

  std::uint32_t capacity() const { return capacity_; }

private:
  std::atomic<Ssn> ssn_{kNoSsn};
  std::atomic<TxnId> lock_{kNoTxn};
  std::uint32_t capacity_;
  std::uint32_t len_ = 0;
  std::unique_ptr<char[]> data_;
};

/// Fixed key space mapped to tuples. The structure is immutable after build;
/// only tuple contents change. Rows are kept in key order for range scans
/// and partitioned checkpoint walks.
class Table {
public:
  class Builder {
  public:
    void add(Key key, std::string value) {
      max_len_ = std::max<std::size_t>(max_len_, value.size());
      rows_.emplace_back(key, std::move(value));
    }
    void reserve_capacity(std::uint32_t cap) { min_capacity_ = cap; }

    Table build() && {
      std::sort(rows_.begin(), rows_.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      Table t;
      t.value_capacity_ = std::max<std::uint32_t>(
          min_capacity_, static_cast<std::uint32_t>(max_len_));
      t.keys_.reserve(rows_.size());
      t.tuples_.reserve(rows_.size());
      t.index_.reserve(rows_.size());
      for (auto& [key, value] : rows_) {
        if (!t.keys_.empty() && t.keys_.back() == key)
          throw EngineError("duplicate key in table build");
        t.index_.emplace(key, static_cast<std::uint32_t>(t.keys_.size()));
        t.keys_.push_back(key);
        t.tuples_.push_back(std::make_unique<Tuple>(value, t.value_capacity_));
      }
      return t;
    }

  private:
    std::vector<std::pair<Key, std::string>> rows_;
    std::size_t max_len_ = 0;
    std::uint32_t min_capacity_ = 64;
  };

  Tuple* lookup(Key key) {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : tuples_[it->second].get();
  }
  const Tuple* lookup(Key key) const {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : tuples_[it->second].get();
  }

  std::size_t size() const { return keys_.size(); }
  Key key_at(std::size_t idx) const { return keys_[idx]; }
  Tuple& tuple_at(std::size_t idx) { return *tuples_[idx]; }
  const Tuple& tuple_at(std::size_t idx) const { return *tuples_[idx]; }
  std::uint32_t value_capacity() const { return value_capacity_; }

  /// Index of the first row with key >= `key`.
  std::size_t lower_bound(Key key) const {
    return static_cast<std::size_t>(
        std::lower_bound(keys_.begin(), keys_.end(), key) - keys_.begin());
  }

  Ssn max_ssn() const {
    Ssn m = 0;
    for (const auto& t : tuples_) m = std::max(m, t->ssn());
    return m;
  }

  /// Deterministic key-ordered dump: key(8) ssn(8) len(4) bytes, repeated.
  /// Used for byte-identical table comparisons in tests and recovery checks.
  std::vector<unsigned char> serialize_sorted() const {
    std::vector<unsigned char> out;
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      auto [value, ssn] = tuples_[i]->read_consistent();
      unsigned char hdr[20];
      for (int b = 0; b < 8; ++b) hdr[b] = static_cast<unsigned char>(keys_[i] >> (8 * b));
      for (int b = 0; b < 8; ++b) hdr[8 + b] = static_cast<unsigned char>(ssn >> (8 * b));
      const auto len = static_cast<std::uint32_t>(value.size());
      for (int b = 0; b < 4; ++b) hdr[16 + b] = static_cast<unsigned char>(len >> (8 * b));
      out.insert(out.end(), hdr, hdr + 20);
      out.insert(out.end(), value.begin(), value.end());
    }
    return out;
  }

private:
  std::vector<Key> keys_;
  std::vector<std::unique_ptr<Tuple>> tuples_;
  std::unordered_map<Key, std::uint32_t> index_;
  std::uint32_t value_capacity_ = 64;
};

} // namespace poplar
