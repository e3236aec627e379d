#pragma once

#include <sstream>
#include <string>

namespace visfit::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

/// Verbosity comes from the VISFIT_LOG environment variable
/// (debug|info|warn|error); default warn.
Level threshold();

void write(Level level, const std::string& message);

template <typename... Args>
void emit(Level level, Args&&... args) {
  if (level < threshold()) return;
  std::ostringstream os;
  (os << ... << args);
  write(level, os.str());
}

template <typename... Args>
void debug(Args&&... args) { emit(Level::kDebug, std::forward<Args>(args)...); }
template <typename... Args>
void info(Args&&... args) { emit(Level::kInfo, std::forward<Args>(args)...); }
template <typename... Args>
void warn(Args&&... args) { emit(Level::kWarn, std::forward<Args>(args)...); }
template <typename... Args>
void error(Args&&... args) { emit(Level::kError, std::forward<Args>(args)...); }

}  // namespace visfit::log
