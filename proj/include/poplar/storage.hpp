#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poplar/common.hpp"

namespace poplar {

/// Flat namespace of named byte files backing logs, checkpoints and
/// metadata. One simulated implementation with crash-freeze semantics and
/// one directory-backed implementation with OS-level sync.
class Storage {
public:
  virtual ~Storage() = default;

  /// Appends to the named file (created on first use) and completes a
  /// durability barrier before returning.
  virtual void append_sync(const std::string& name,
                           std::span<const unsigned char> bytes) = 0;

  /// Creates the file if absent; used so recovery can see every configured
  /// device even when it never received a record.
  virtual void touch(const std::string& name) = 0;

  /// Write-temp-then-rename. The file is either absent or fully present.
  virtual void write_file_atomic(const std::string& name,
                                 std::span<const unsigned char> bytes) = 0;

  virtual std::optional<std::vector<unsigned char>>
  read_file(const std::string& name) const = 0;

  virtual std::vector<std::string> list(const std::string& prefix) const = 0;

  virtual void remove(const std::string& name) = 0;
};

class SimStorage final : public Storage {
public:
  void append_sync(const std::string& name,
                   std::span<const unsigned char> bytes) override {
    std::lock_guard<std::mutex> g(mu_);
    auto& f = files_[name];
    f.insert(f.end(), bytes.begin(), bytes.end());
  }

  void touch(const std::string& name) override {
    std::lock_guard<std::mutex> g(mu_);
    files_.try_emplace(name);
  }

  void write_file_atomic(const std::string& name,
                         std::span<const unsigned char> bytes) override {
    std::lock_guard<std::mutex> g(mu_);
    files_[name].assign(bytes.begin(), bytes.end());
  }

  std::optional<std::vector<unsigned char>>
  read_file(const std::string& name) const override {
    std::lock_guard<std::mutex> g(mu_);
    auto it = files_.find(name);
    if (it == files_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::string> list(const std::string& prefix) const override {
    std::lock_guard<std::mutex> g(mu_);
    std::vector<std::string> out;
    for (const auto& [name, _] : files_) {
      if (name.rfind(prefix, 0) == 0) out.push_back(name);
    }
    return out;
  }

  void remove(const std::string& name) override {
    std::lock_guard<std::mutex> g(mu_);
    files_.erase(name);
  }

  std::uint64_t total_bytes() const {
    std::lock_guard<std::mutex> g(mu_);
    std::uint64_t n = 0;
    for (const auto& [_, f] : files_) n += f.size();
    return n;
  }

private:
  mutable std::mutex mu_;
  std::map<std::string, std::vector<unsigned char>> files_;
};

class RealStorage final : public Storage {
public:
  explicit RealStorage(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  void append_sync(const std::string& name,
                   std::span<const unsigned char> bytes) override {
    const auto path = dir_ / name;
    std::FILE* f = std::fopen(path.c_str(), "ab");
    if (!f) throw DeviceError("cannot open " + path.string());
    if (!bytes.empty() &&
        std::fwrite(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
      std::fclose(f);
      throw DeviceError("short write to " + path.string());
    }
    std::fflush(f);
    sync_file(f, path.string());
    std::fclose(f);
  }

  void touch(const std::string& name) override {
    append_sync(name, {});
  }

  void write_file_atomic(const std::string& name,
                         std::span<const unsigned char> bytes) override {
    const auto tmp = dir_ / (name + ".tmp");
    {
      std::FILE* f = std::fopen(tmp.c_str(), "wb");
      if (!f) throw DeviceError("cannot open " + tmp.string());
      if (!bytes.empty() &&
          std::fwrite(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
        std::fclose(f);
        throw DeviceError("short write to " + tmp.string());
      }
      std::fflush(f);
      sync_file(f, tmp.string());
      std::fclose(f);
    }
    std::filesystem::rename(tmp, dir_ / name);
  }

  std::optional<std::vector<unsigned char>>
  read_file(const std::string& name) const override {
    std::ifstream in(dir_ / name, std::ios::binary);
    if (!in) return std::nullopt;
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
  }

  std::vector<std::string> list(const std::string& prefix) const override {
    std::vector<std::string> out;
    if (!std::filesystem::exists(dir_)) return out;
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
      const auto name = e.path().filename().string();
      if (name.rfind(prefix, 0) == 0 && name.find(".tmp") == std::string::npos)
        out.push_back(name);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  void remove(const std::string& name) override {
    std::error_code ec;
    std::filesystem::remove(dir_ / name, ec);
  }

  const std::filesystem::path& dir() const { return dir_; }

private:
  static void sync_file(std::FILE* f, const std::string& what);

  std::filesystem::path dir_;
};

} // namespace poplar

#if defined(__unix__) || defined(__APPLE__)
#include <unistd.h>
inline void poplar::RealStorage::sync_file(std::FILE* f,
                                           const std::string& what) {
  if (::fsync(fileno(f)) != 0) throw DeviceError("fsync failed on " + what);
}
#else
inline void poplar::RealStorage::sync_file(std::FILE*, const std::string&) {}
#endif
