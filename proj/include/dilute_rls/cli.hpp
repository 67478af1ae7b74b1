#pragma once

#include <cstddef>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace dilute_rls {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

/// Thread count from the --threads flag, else DILUTE_RLS_THREADS, else 1.
std::size_t resolve_threads(std::optional<std::size_t> flag);

/// Command-line entry point; `args` excludes the program name.
/// Errors are reported on `err` as a single JSON object.
int run_cli(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace dilute_rls
