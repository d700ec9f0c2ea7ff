// Copyright 2026 The micro-retrieval Authors
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

#pragma once

#include <atomic>
#include <cstdio>
#include <mutex>

#include <fmt/core.h>

namespace micro {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

namespace detail {
inline std::atomic<int>& log_threshold() {
  static std::atomic<int> level{static_cast<int>(LogLevel::kWarn)};
  return level;
}
inline std::atomic<std::size_t>& warning_count() {
  static std::atomic<std::size_t> count{0};
  return count;
}
inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}
inline const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug: return "debug";
    case LogLevel::kInfo: return "info";
    case LogLevel::kWarn: return "warn";
    case LogLevel::kError: return "error";
    default: return "off";
  }
}
}  // namespace detail

inline void set_log_level(LogLevel level) { detail::log_threshold() = static_cast<int>(level); }
inline LogLevel log_level() { return static_cast<LogLevel>(detail::log_threshold().load()); }

/// Number of warnings emitted so far, whether or not they were printed.
inline std::size_t warnings_emitted() { return detail::warning_count().load(); }

// Lines go to stderr as `level=<lvl> event=<name> key=value ...`.
template <typename... Args>
void log(LogLevel level, std::string_view event, fmt::format_string<Args...> fields, Args&&... args) {
  if (level == LogLevel::kWarn) ++detail::warning_count();
  if (static_cast<int>(level) < detail::log_threshold().load()) return;
  const std::string body = fmt::format(fields, std::forward<Args>(args)...);
  std::lock_guard<std::mutex> lock(detail::log_mutex());
  fmt::print(stderr, "level={} event={}{}{}\n", detail::level_name(level), event, body.empty() ? "" : " ", body);
}

template <typename... Args>
void log_info(std::string_view event, fmt::format_string<Args...> fields, Args&&... args) {
  log(LogLevel::kInfo, event, fields, std::forward<Args>(args)...);
}

template <typename... Args>
void log_warn(std::string_view event, fmt::format_string<Args...> fields, Args&&... args) {
  log(LogLevel::kWarn, event, fields, std::forward<Args>(args)...);
}

template <typename... Args>
void log_debug(std::string_view event, fmt::format_string<Args...> fields, Args&&... args) {
  log(LogLevel::kDebug, event, fields, std::forward<Args>(args)...);
}

}  // namespace micro
