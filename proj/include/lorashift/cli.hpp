#pragma once

#include <iosfwd>

namespace lorashift {

/// Exit codes of the lora-shift tool.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitCompute = 3 };

/// Entry point of the `lora-shift` tool; subcommands gen-model, gen-lora,
/// analyze, margin, sweep.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lorashift
