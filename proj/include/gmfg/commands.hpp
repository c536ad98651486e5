#pragma once

#include <iosfwd>
#include <string>

#include "gmfg/config.hpp"
#include "gmfg/error.hpp"

namespace gmfg {

struct CommandContext {
    ExperimentConfig config;
    std::string config_path;
    std::string out_dir = "runs";
    /// Existing run directory to read from (simulate, nash, convergence, report).
    std::string input_run;
    std::ostream* log = nullptr;  ///< progress messages; null silences them
};

struct CommandResult {
    ExitCode code = ExitCode::ok;
    std::string run_dir;
    std::string message;
};

CommandResult cmd_solve(const CommandContext& ctx);
CommandResult cmd_simulate(const CommandContext& ctx);
CommandResult cmd_nash(const CommandContext& ctx);
CommandResult cmd_convergence(const CommandContext& ctx);
CommandResult cmd_graphon_study(const CommandContext& ctx);
CommandResult cmd_report(const CommandContext& ctx);

/// Dispatches by subcommand name ("solve", "simulate", "nash", "convergence",
/// "graphon-study", "report"). Errors become exit codes and messages.
CommandResult run_command(const std::string& name, const CommandContext& ctx);

/// Fresh directory "<out>/<command>-<UTC timestamp>-<hash8>"; a numeric
/// suffix is appended when the name is taken, so nothing is overwritten.
std::string make_run_dir(const std::string& out_dir, const std::string& command, const std::string& hash);

/// True when drift, reward and terminal payoff are unchanged by shifting the
/// state and the environment by a common constant (checked on probe points).
bool translation_invariant(const ModelSpec& model);

std::string version_string();

} // namespace gmfg
