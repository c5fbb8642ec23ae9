#pragma once

#include <chrono>
#include <filesystem>
#include <thread>

#include "llmregress/error.hpp"

namespace llmregress {

// Advisory single-writer lock backed by an atomically created directory.
// Stale locks left by crashed writers are broken after the timeout.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& lock_path,
                         std::chrono::milliseconds timeout = std::chrono::seconds(10))
      : lock_path_(lock_path) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      std::error_code ec;
      if (std::filesystem::create_directory(lock_path_, ec) && !ec) {
        return;
      }
      if (std::chrono::steady_clock::now() > deadline) {
        std::filesystem::remove(lock_path_, ec);  // break a stale lock once
        if (std::filesystem::create_directory(lock_path_, ec) && !ec) {
          return;
        }
        throw Error(ErrorCode::IO_ERROR,
                    "cannot acquire lock " + lock_path_.string());
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }

  ~DirectoryLock() {
    std::error_code ec;
    std::filesystem::remove(lock_path_, ec);
  }

  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path lock_path_;
};

}  // namespace llmregress
