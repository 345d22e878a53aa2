#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace weaksep::log {

enum class Level { quiet = 0, warn = 1, info = 2, debug = 3 };

inline std::atomic<Level>& threshold() {
  static std::atomic<Level> level{Level::warn};
  return level;
}

inline void set_level(Level level) { threshold().store(level); }

inline void emit(Level level, std::string_view tag, std::string_view message) {
  if (static_cast<int>(level) > static_cast<int>(threshold().load())) return;
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  std::cerr << "[" << tag << "] " << message << '\n';
}

inline void warn(std::string_view message) { emit(Level::warn, "warn", message); }
inline void info(std::string_view message) { emit(Level::info, "info", message); }
inline void debug(std::string_view message) { emit(Level::debug, "debug", message); }

}  // namespace weaksep::log
