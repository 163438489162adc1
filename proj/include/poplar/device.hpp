#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "poplar/common.hpp"
#include "poplar/storage.hpp"
#include "poplar/trace.hpp"

namespace poplar {

/// One append-only storage channel, owned by exactly one logger or
/// checkpoint thread. Writes go to the currently open file.
class Device {
public:
  virtual ~Device() = default;

  /// Switches the append target (log rotation). Creates the file.
  virtual void open_file(const std::string& name) = 0;

  /// Appends and completes a durability barrier. Throws EngineHalted if an
  /// injected crash lands inside the write; the durable file then holds only
  /// a prefix of the bytes.
  virtual void append_and_sync(std::span<const unsigned char> bytes) = 0;

  virtual const std::string& label() const = 0;
  virtual std::uint64_t bytes_written() const = 0;

  /// Modeled time the device has been occupied by writes (0 for real files).
  virtual double busy_seconds() const = 0;
};

/// Simulated device: bandwidth/latency shaping plus deterministic crash
/// injection. In shaped mode every write blocks for its modeled duration, so
/// sustained throughput cannot exceed the bandwidth cap.
class SimDevice final : public Device {
public:
  SimDevice(Storage& storage, std::string label, double bandwidth_bytes_per_s,
            double write_latency_s, bool shaped, VerifyHooks* hooks = nullptr)
      : storage_(storage), label_(std::move(label)),
        bandwidth_(bandwidth_bytes_per_s), latency_(write_latency_s),
        shaped_(shaped), hooks_(hooks) {}

  void open_file(const std::string& name) override {
    file_ = name;
    storage_.touch(name);
  }

  void append_and_sync(std::span<const unsigned char> bytes) override {
    if (file_.empty()) throw DeviceError("device has no open file");
    if (hooks_ && hooks_->crashed()) throw EngineHalted();
    std::uint64_t allowed = bytes.size();
    if (hooks_) {
      allowed = hooks_->clamp_write(label_, cumulative_, bytes.size());
    }
    if (allowed > 0) {
      storage_.append_sync(file_, bytes.subspan(0, allowed));
      cumulative_ += allowed;
    }
    if (allowed < bytes.size()) throw EngineHalted();
    const double cost = model_seconds(bytes.size());
    busy_seconds_ += cost;
    if (shaped_) {
      std::this_thread::sleep_for(std::chrono::duration<double>(cost));
    }
  }

  double model_seconds(std::uint64_t len) const {
    return static_cast<double>(len) / bandwidth_ + latency_;
  }

  const std::string& label() const override { return label_; }
  std::uint64_t bytes_written() const override { return cumulative_; }
  double busy_seconds() const override { return busy_seconds_; }

private:
  Storage& storage_;
  std::string file_;
  std::string label_;
  double bandwidth_;
  double latency_;
  bool shaped_;
  VerifyHooks* hooks_;
  std::uint64_t cumulative_ = 0;
  double busy_seconds_ = 0;
};

/// Real file-backed device; durability via fsync in RealStorage.
class RealDevice final : public Device {
public:
  RealDevice(Storage& storage, std::string label)
      : storage_(storage), label_(std::move(label)) {}

  void open_file(const std::string& name) override {
    file_ = name;
    storage_.touch(name);
  }

  void append_and_sync(std::span<const unsigned char> bytes) override {
    if (file_.empty()) throw DeviceError("device has no open file");
    storage_.append_sync(file_, bytes);
    cumulative_ += bytes.size();
  }

  const std::string& label() const override { return label_; }
  std::uint64_t bytes_written() const override { return cumulative_; }
  double busy_seconds() const override { return 0; }

private:
  Storage& storage_;
  std::string file_;
  std::string label_;
  std::uint64_t cumulative_ = 0;
};

/// Parses a crash script: one directive per file, either
///   crash after <n> bytes on <device>
///   crash at event <k>
inline CrashPlan parse_crash_script(const std::string& text) {
  std::istringstream in(text);
  std::string word;
  in >> word;
  if (word != "crash") throw ConfigError("crash script must start with 'crash'");
  in >> word;
  if (word == "after") {
    std::uint64_t n = 0;
    std::string bytes_kw, on_kw, device;
    if (!(in >> n >> bytes_kw >> on_kw >> device) || bytes_kw != "bytes" ||
        on_kw != "on")
      throw ConfigError("expected: crash after <n> bytes on <device>");
    return CrashPlan::after_bytes(device, n);
  }
  if (word == "at") {
    std::string event_kw;
    std::uint64_t k = 0;
    if (!(in >> event_kw >> k) || event_kw != "event")
      throw ConfigError("expected: crash at event <k>");
    return CrashPlan::at_event(k);
  }
  throw ConfigError("unknown crash directive: " + word);
}

} // namespace poplar
