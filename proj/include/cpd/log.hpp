#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace cpd {

enum class LogLevel : int { error = 0, warn = 1, info = 2, debug = 3 };

// Verbosity comes from the CPD_LOG environment variable
// (error|warn|info|debug); default is warn.
inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("CPD_LOG");
        if (env == nullptr) return LogLevel::warn;
        if (std::strcmp(env, "error") == 0) return LogLevel::error;
        if (std::strcmp(env, "warn") == 0) return LogLevel::warn;
        if (std::strcmp(env, "info") == 0) return LogLevel::info;
        if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
        return LogLevel::warn;
    }();
    return level;
}

inline void log_line(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[cpd:%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

inline void log_error(const std::string& msg) { log_line(LogLevel::error, msg); }
inline void log_warn(const std::string& msg) { log_line(LogLevel::warn, msg); }
inline void log_info(const std::string& msg) { log_line(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log_line(LogLevel::debug, msg); }

} // namespace cpd
