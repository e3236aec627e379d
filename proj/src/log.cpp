#include "visfit/log.hpp"

#include <cstdlib>
#include <iostream>

namespace visfit::log {

Level threshold() {
  static const Level cached = [] {
    const char* env = std::getenv("VISFIT_LOG");
    if (!env) return Level::kWarn;
    const std::string v(env);
    if (v == "debug") return Level::kDebug;
    if (v == "info") return Level::kInfo;
    if (v == "error") return Level::kError;
    return Level::kWarn;
  }();
  return cached;
}

void write(Level level, const std::string& message) {
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::cerr << "[visfit:" << names[static_cast<int>(level)] << "] " << message << "\n";
}

}  // namespace visfit::log
