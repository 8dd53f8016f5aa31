#pragma once

// Minimal leveled logger on stderr. Level comes from CREDIT_LOG (error, warn, info, debug); the
// default is warn.

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace credit::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

inline Level parse_level(std::string_view s, Level fallback = Level::warn) {
  if (s == "error") return Level::error;
  if (s == "warn" || s == "warning") return Level::warn;
  if (s == "info") return Level::info;
  if (s == "debug") return Level::debug;
  return fallback;
}

inline Level& threshold() {
  static Level level = [] {
    const char* env = std::getenv("CREDIT_LOG");
    return env ? parse_level(env) : Level::warn;
  }();
  return level;
}

inline void set_level(Level l) { threshold() = l; }
inline bool enabled(Level l) { return static_cast<int>(l) <= static_cast<int>(threshold()); }

inline void write(Level l, std::string_view msg) {
  if (!enabled(l)) return;
  static std::mutex mu;
  static constexpr const char* tags[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(mu);
  std::cerr << "[" << tags[static_cast<int>(l)] << "] " << msg << '\n';
}

inline void error(std::string_view m) { write(Level::error, m); }
inline void warn(std::string_view m) { write(Level::warn, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void debug(std::string_view m) { write(Level::debug, m); }

}  // namespace credit::log
