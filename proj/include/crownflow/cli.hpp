#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace crownflow::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitInternal = 3;

/// Runs one invocation: args[0] is the program name, args[1] the subcommand
/// (synth | flows | segment | eval | pipeline). Errors are written to `err`
/// as "error[<id>]: <message>"; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace crownflow::cli
