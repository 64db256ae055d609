#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace promptforge::log {

enum class Level { Error = 0, Info = 1, Debug = 2 };

// Read once from PROMPTFORGE_LOG (error|info|debug); defaults to error.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("PROMPTFORGE_LOG");
    if (env == nullptr) return Level::Error;
    const std::string_view value(env);
    if (value == "debug") return Level::Debug;
    if (value == "info") return Level::Info;
    return Level::Error;
  }();
  return level;
}

inline void write(Level level, std::string_view message) {
  if (static_cast<int>(level) > static_cast<int>(threshold())) return;
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  constexpr std::string_view tags[] = {"error", "info", "debug"};
  std::cerr << "[promptforge:" << tags[static_cast<int>(level)] << "] " << message << '\n';
}

inline void error(std::string_view message) { write(Level::Error, message); }
inline void info(std::string_view message) { write(Level::Info, message); }
inline void debug(std::string_view message) { write(Level::Debug, message); }

}  // namespace promptforge::log
