#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace umt {

/// Verbosity from UMT_LOG: quiet | info (default) | debug.
inline int log_level() {
  static const int level = [] {
    const char* env = std::getenv("UMT_LOG");
    if (!env) return 1;
    if (std::strcmp(env, "quiet") == 0) return 0;
    if (std::strcmp(env, "debug") == 0) return 2;
    return 1;
  }();
  return level;
}

template <typename... Args>
void log_info(const char* fmt, Args... args) {
  if (log_level() >= 1) {
    std::fprintf(stderr, "[umt] ");
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
  }
}

template <typename... Args>
void log_debug(const char* fmt, Args... args) {
  if (log_level() >= 2) {
    std::fprintf(stderr, "[umt:debug] ");
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
  }
}

}  // namespace umt
