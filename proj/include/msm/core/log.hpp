#pragma once

#include <string>
#include <string_view>

namespace msm::log {

enum class Level { debug, info, warn, error };

/// Switches output between human-readable lines and NDJSON records.
void set_json(bool enabled);
void set_min_level(Level level);

void write(Level level, std::string_view msg);

inline void debug(std::string_view msg) { write(Level::debug, msg); }
inline void info(std::string_view msg) { write(Level::info, msg); }
inline void warn(std::string_view msg) { write(Level::warn, msg); }
inline void error(std::string_view msg) { write(Level::error, msg); }

/// Number of warnings emitted so far (tests use this to observe warnings).
std::size_t warning_count();

}  // namespace msm::log
