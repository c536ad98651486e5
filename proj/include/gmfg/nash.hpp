#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gmfg/graphon.hpp"
#include "gmfg/meanfield.hpp"
#include "gmfg/particles.hpp"

namespace gmfg {

/// Label cell of player i among K uniform cells (the cell containing (i+1)/n).
int label_cell(int i, int n, int K);

/// Player i follows the solution feedback of its label cell, with left time
/// lookup and monotone cubic interpolation in x. `shift` perturbs every rule
/// by a constant (0 for the plain construction).
Profile construct_profile(const MFGSolution& solution, int n, const ControlSet& box, double shift = 0.0);

enum class ExploitMethod { mean_field_br, deviation_grid };

ExploitMethod parse_exploit_method(const std::string& name);
std::string exploit_method_name(ExploitMethod m);

struct ExploitabilityOptions {
    int reps = 32;
    int deviators = 16;           ///< players probed, stratified across labels
    std::uint64_t seed = 1;
    KernelFamily kernel = KernelFamily::triangle;
    double bandwidth_c = 1.0;
    double profile_shift = 0.0;   ///< perturbation of the baseline profile
    SimulationSpec sim;
    FKOptions fk;
    FPOptions fp;
};

struct PlayerDelta {
    int player = 0;
    double label = 0.0;
    double j_base = 0.0;
    double j_dev = 0.0;
    double delta = 0.0;
    double se = 0.0;
    std::string variant;  ///< which deviation attained the value
};

/// Lower-bound exploitability estimates. Both arms of each gap share seeds.
struct ExploitabilityReport {
    ExploitMethod method = ExploitMethod::mean_field_br;
    int n = 0;
    std::vector<PlayerDelta> players;
    double average = 0.0;     ///< mean delta over probed players
    double average_se = 0.0;
    double baseline = 0.0;    ///< (1/n) sum_i J_i under the profile
    double baseline_se = 0.0;
};

/// Stratified deviator indices: floor((s + 1/2) n / m), s = 0..m-1.
std::vector<int> deviator_indices(int n, int m);

ExploitabilityReport exploitability(const ModelSpec& model, const Graphon& graphon, const MFGSolution& solution,
                                    int n, ExploitMethod method, const ExploitabilityOptions& options);

/// Discrete Lasry-Lions sum for one pair: terminal g-difference plus the
/// time-integrated coupling difference, both paired against (m - m').
double monotonicity_value(const ModelSpec& model, const LabelCoupling& coupling, const DensityFlow& a,
                          const DensityFlow& b);

/// Flow of a randomized forward run: per-label feedback a + b tanh(x - c)
/// + d t clamped into the control set, from a Gaussian initial law with
/// random mean and spread. Draws come from NoiseStream(seed, id).
DensityFlow randomized_flow(const ModelSpec& model, const LabelCoupling& coupling, const Grids& grids,
                            std::uint64_t seed, std::uint64_t id, const FPOptions& fp = {});

/// Largest value over the pairs. Needs the model's separated form.
double monotonicity_check(const ModelSpec& model, const Graphon& graphon,
                          const std::vector<std::pair<DensityFlow, DensityFlow>>& pairs,
                          std::vector<double>* values = nullptr);

} // namespace gmfg
