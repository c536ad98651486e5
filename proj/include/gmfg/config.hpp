#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gmfg/meanfield.hpp"
#include "gmfg/nash.hpp"
#include "gmfg/particles.hpp"

namespace gmfg {

struct ModelConfig {
    std::string name = "monotone";
    std::map<std::string, double> params;  ///< overrides of the catalog defaults
};

struct InitialConfig {
    double mean = 0.0;
    double sd = 1.0;
};

struct KernelConfig {
    KernelFamily family = KernelFamily::triangle;
    double bandwidth_c = 1.0;
};

struct SimulationConfig {
    std::vector<int> n{100, 400, 1600};
    int steps = 100;
    /// Times at which empirical flows are recorded and compared; each must
    /// fall on both the particle step grid and the solver time grid.
    std::vector<double> record_times{0.5, 1.0};
    int reps = 32;
    std::uint64_t seed = 1;
};

struct NashConfig {
    ExploitMethod method = ExploitMethod::mean_field_br;
    int deviators = 16;
    double profile_shift = 0.0;
    int monotonicity_pairs = 100;
    bool exploitability_in_convergence = true;
};

struct CommonNoiseConfig {
    int paths = 8;
};

struct GraphonStudyConfig {
    std::vector<int> k{2, 4, 8, 16};
    int reference_labels = 64;
};

struct OutputConfig {
    bool plots = true;
};

/// Everything a subcommand needs, validated on load.
struct ExperimentConfig {
    ModelConfig model;
    std::string graphon = "constant:1";
    Grids grids;
    SolverOptions solver;
    InitialConfig initial;
    KernelConfig kernel;
    SimulationConfig simulation;
    NashConfig nash;
    CommonNoiseConfig common_noise;
    GraphonStudyConfig study;
    OutputConfig output;
    int threads = 1;

    /// Directory that relative paths inside the config resolve against.
    std::string base_dir = ".";

    /// Throws ConfigError on out-of-range values.
    void validate() const;

    /// Deterministic JSON rendering of every resolved setting.
    std::string canonical_json() const;
    /// FNV-1a of canonical_json(), as 16 hex digits.
    std::string hash() const;

    ModelSpec build_model() const;
    Graphon build_graphon() const;
    std::vector<double> build_initial() const;
    /// Solver options with the thread count applied.
    SolverOptions solver_options() const;
    SimulationSpec simulation_spec() const;
};

/// Parses TOML text. Unknown keys, wrong types and bad values throw
/// ConfigError with "<origin>:<line>: ..." messages.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");

ExperimentConfig load_config(const std::string& path);

} // namespace gmfg
