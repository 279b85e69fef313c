#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace mcd {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2, Debug = 3 };

// Verbosity from the MCD_LOG environment variable: quiet|warn|info|debug.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("MCD_LOG");
    if (!env) return LogLevel::Warn;
    if (std::strcmp(env, "quiet") == 0) return LogLevel::Quiet;
    if (std::strcmp(env, "info") == 0) return LogLevel::Info;
    if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

inline void log_warn(const std::string& msg) {
  if (log_level() >= LogLevel::Warn) std::fprintf(stderr, "[mcd] warning: %s\n", msg.c_str());
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::fprintf(stderr, "[mcd] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::fprintf(stderr, "[mcd] debug: %s\n", msg.c_str());
}

}  // namespace mcd
