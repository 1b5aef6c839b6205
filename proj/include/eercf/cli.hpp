#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eercf::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;  // usage errors, invalid data, failed checks
inline constexpr int kExitIo = 2;          // unreadable or unwritable files

/// Entry point for `eercf <subcommand> ...`: ingest, search, eval, flops,
/// synth, losscheck.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eercf::cli
