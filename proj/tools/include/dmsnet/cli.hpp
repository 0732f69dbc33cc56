#pragma once

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

namespace dmsnet::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kConfigError = 2,
    kDataError = 3,
    kCheckpointError = 4,
};

/// Runs one `dmsnet` command. `args` excludes the program name. Normal
/// output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

/// Expands `--rows` tokens: ablation rows, backbone names, and the
/// shorthands `backbones` (every backbone) and `components` (every ablation row).
/// RegistryError on the first unknown token.
std::vector<std::string> expand_rows(const std::string& spec);

}  // namespace dmsnet::cli
