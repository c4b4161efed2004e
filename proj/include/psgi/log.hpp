#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>

namespace psgi {

enum class LogLevel : int { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Threshold from PSGI_LOG (error|warn|info|debug); warn when unset.
inline LogLevel log_threshold() {
  static const LogLevel level = [] {
    const char* v = std::getenv("PSGI_LOG");
    const std::string s = v ? v : "";
    if (s == "error") return LogLevel::Error;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

inline bool log_enabled(LogLevel l) { return static_cast<int>(l) <= static_cast<int>(log_threshold()); }

/// One structured record on stderr: "level=info event=... key=value ...".
template <class... KV>
void log_event(LogLevel l, const char* event, const KV&... kv) {
  if (!log_enabled(l)) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::ostringstream os;
  os << "level=" << names[static_cast<int>(l)] << " event=" << event;
  const char* sep = " ";
  bool key = true;
  ((os << (key ? sep : "=") << kv, key = !key), ...);
  std::cerr << os.str() << '\n';
}

}  // namespace psgi
