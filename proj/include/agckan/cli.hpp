#pragma once

namespace agckan::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes: 0 success, 1 usage error, 2 data or model error.
int run(int argc, char** argv);

}  // namespace agckan::cli
