#pragma once

#include <string>
#include <vector>

#include "msm/core/error.hpp"

namespace msm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingArtifact = 3;
inline constexpr int kExitDataValidation = 4;
inline constexpr int kExitNumeric = 5;

int exit_code(ErrorKind kind);

/// Entry point of the `msm` tool. Returns the process exit code.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace msm::cli
