#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>

namespace fairproj::log {

enum class Level { Info, Warning, Error };

using Sink = std::function<void(Level, std::string_view)>;

namespace detail {
inline std::mutex& mutex() {
  static std::mutex m;
  return m;
}
inline Sink& sink() {
  static Sink s = [](Level level, std::string_view msg) {
    const char* tag = level == Level::Error ? "[error] " : level == Level::Warning ? "[warn] " : "[info] ";
    std::cerr << tag << msg << '\n';
  };
  return s;
}
}  // namespace detail

/// Replace the process-wide sink. Returns the previous one so callers
/// (mostly tests) can restore it.
inline Sink set_sink(Sink s) {
  std::lock_guard lock(detail::mutex());
  return std::exchange(detail::sink(), std::move(s));
}

inline void emit(Level level, std::string_view msg) {
  std::lock_guard lock(detail::mutex());
  if (detail::sink()) detail::sink()(level, msg);
}

inline void info(std::string_view msg) { emit(Level::Info, msg); }
inline void warn(std::string_view msg) { emit(Level::Warning, msg); }
inline void error(std::string_view msg) { emit(Level::Error, msg); }

/// Installs a sink for the lifetime of the guard.
class ScopedSink {
 public:
  explicit ScopedSink(Sink s) : previous_(set_sink(std::move(s))) {}
  ~ScopedSink() { set_sink(std::move(previous_)); }
  ScopedSink(const ScopedSink&) = delete;
  ScopedSink& operator=(const ScopedSink&) = delete;

 private:
  Sink previous_;
};

}  // namespace fairproj::log
