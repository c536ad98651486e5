#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "gmfg/commands.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Graphon mean-field game solver and n-player simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", gmfg::version_string());

    std::string config_path;
    std::string out_dir = "runs";
    std::string run_dir;
    std::uint64_t seed = 0;
    bool quiet = false;

    struct Spec {
        const char* name;
        const char* help;
        bool takes_run;
    };
    const Spec specs[] = {
        {"solve", "Solve the mean-field game and write its flow, gradient and feedback", false},
        {"simulate", "Simulate n-player systems under the constructed profile", true},
        {"nash", "Estimate exploitability and check monotonicity", true},
        {"convergence", "Sweep n and fit convergence rates", true},
        {"graphon-study", "Step-graphon approximation and stability sweep", false},
        {"report", "Summarize an existing run directory", true},
    };
    for (const auto& s : specs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        sub->add_option("--config", config_path, "experiment config (TOML)")->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "parent directory for run directories")->capture_default_str();
        sub->add_option("--seed", seed, "master seed, overrides simulation.seed");
        sub->add_flag("--quiet", quiet, "suppress progress messages");
        if (s.takes_run) sub->add_option("--run", run_dir, "existing run directory to read");
        if (std::string(s.name) != "report") sub->get_option("--config")->required();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(gmfg::ExitCode::user_error);
    }

    const std::string command = app.get_subcommands().front()->get_name();
    const CLI::App* sub = app.get_subcommands().front();

    gmfg::CommandContext ctx;
    ctx.out_dir = out_dir;
    ctx.input_run = run_dir;
    ctx.log = quiet ? nullptr : &std::cerr;
    try {
        if (!config_path.empty()) {
            ctx.config = gmfg::load_config(config_path);
            ctx.config_path = config_path;
        }
        if (sub->count("--seed") > 0) ctx.config.simulation.seed = seed;
    } catch (const gmfg::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    }

    gmfg::CommandResult res = gmfg::run_command(command, ctx);
    if (res.code != gmfg::ExitCode::ok) std::cerr << "error: " << res.message << '\n';
    if (!res.run_dir.empty()) std::cout << res.run_dir << '\n';
    return static_cast<int>(res.code);
}
