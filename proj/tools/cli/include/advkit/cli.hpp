#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace advkit::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // bad flags, config or inputs; nothing written
inline constexpr int kExitFailed = 2;   // failure after outputs were started

/// Runs one subcommand (train, eval, fgsm, sweep, patch-train, patch-eval,
/// report). `args` excludes the program name. Progress goes to `out`,
/// diagnostics and usage to `err`.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

/// Writes a synthetic digits corpus as IDX train/test files plus classes.txt.
int run_digits(std::span<const std::string> args, std::ostream& out, std::ostream& err);

/// Parses "start:stop:step" (inclusive of stop within 1e-9, values snapped
/// to a 1e-9 grid) or a comma-separated list. Throws advkit::Error.
std::vector<double> parse_eps(const std::string& text);

}  // namespace advkit::cli
