#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cbicl/config.hpp"
#include "cbicl/provider.hpp"

namespace cbicl::io {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitVerificationFailed = 2;
inline constexpr int kExitUsage = 64;

struct CliEnvironment {
  EnvLookup env = system_env;
  Sleeper sleep = sleep_seconds;
};

/// Entry point behind the cbicl binary. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const CliEnvironment& environment = {});

}  // namespace cbicl::io
