// Copyright 2026 The hzdhlip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal leveled logging to stderr. Warnings raised in hot loops are counted
// and only the first few occurrences per message are printed.

#pragma once

#include <atomic>
#include <iostream>
#include <map>
#include <mutex>
#include <string>

namespace hzdhlip::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

inline std::atomic<Level>& threshold() {
  static std::atomic<Level> level{Level::Warn};
  return level;
}

inline void set_level(Level level) { threshold().store(level); }

inline void write(Level level, const std::string& msg) {
  if (level < threshold().load()) return;
  static std::mutex mu;
  static constexpr const char* kNames[] = {"debug", "info", "warn", "error"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[hzdhlip " << kNames[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void info(const std::string& msg) { write(Level::Info, msg); }
inline void error(const std::string& msg) { write(Level::Error, msg); }

/// Prints the first `limit` occurrences of each distinct key.
inline void warn_limited(const std::string& key, const std::string& msg, int limit = 3) {
  static std::mutex mu;
  static std::map<std::string, int> counts;
  int n;
  {
    std::lock_guard<std::mutex> lock(mu);
    n = ++counts[key];
  }
  if (n <= limit) write(Level::Warn, msg + (n == limit ? " (further occurrences suppressed)" : ""));
}

inline void warn(const std::string& msg) { write(Level::Warn, msg); }

}  // namespace hzdhlip::log
