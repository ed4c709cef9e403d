#include "g4ap/log.hpp"

#include <iostream>

#include "g4ap/errors.hpp"

namespace g4ap {

namespace {
LogLevel g_level = LogLevel::warn;

void emit(LogLevel level, const char* tag, const std::string& msg) {
  if (level > g_level) return;
  std::cerr << tag << msg << std::endl;
}
}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

LogLevel log_level_from_name(const std::string& name) {
  if (name == "error") return LogLevel::error;
  if (name == "warn" || name == "warning") return LogLevel::warn;
  if (name == "info") return LogLevel::info;
  if (name == "debug") return LogLevel::debug;
  throw ContractError("unknown log level '" + name + "'");
}

void log_error(const std::string& msg) { emit(LogLevel::error, "[error] ", msg); }
void log_warn(const std::string& msg) { emit(LogLevel::warn, "[warn] ", msg); }
void log_info(const std::string& msg) { emit(LogLevel::info, "[info] ", msg); }
void log_debug(const std::string& msg) { emit(LogLevel::debug, "[debug] ", msg); }

}  // namespace g4ap
