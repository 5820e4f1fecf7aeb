#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace sbical::cli {

enum ExitCode : int { kOk = 0, kFailed = 1, kBadInput = 2 };

// Full command line, as main() sees it. Messages go to `out` and `err`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Seed precedence: explicit flag, then CP4SBI_SEED, then `fallback`. Throws
// ConfigError when CP4SBI_SEED is not an unsigned integer.
std::uint64_t effective_seed(std::optional<std::uint64_t> flag, std::uint64_t fallback);

}  // namespace sbical::cli
