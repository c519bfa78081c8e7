#pragma once

#include <iosfwd>

namespace ebxmse {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

/// Entry point of the ebxmse tool. Errors are reported as one JSON object on `err`.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

}  // namespace ebxmse
