#pragma once

#include <span>
#include <string>
#include <vector>

#include "gmfg/graphon.hpp"
#include "gmfg/model.hpp"

namespace gmfg {

/// Uniform time grid t_i = i*dt (i = 0..nt), N_x cells on [x_lo, x_hi] with
/// values at cell centers, and K midpoint labels.
struct Grids {
    double T = 1.0;
    int nt = 100;
    double x_lo = -6.0;
    double x_hi = 6.0;
    int nx = 200;
    int labels = 1;

    double dt() const { return T / nt; }
    double dx() const { return (x_hi - x_lo) / nx; }
    double t(int i) const { return i * dt(); }
    double x(int j) const { return x_lo + (j + 0.5) * dx(); }
    double label(int k) const { return (k + 0.5) / labels; }
    std::vector<double> xs() const;

    /// Throws ContractError unless every size and spacing is positive.
    void validate() const;
    bool same_as(const Grids& o) const;
};

/// Scalar field on time x label x space, stored [(i*K + k)*nx + j].
struct LabelField {
    Grids grids;
    std::vector<double> data;

    LabelField() = default;
    explicit LabelField(const Grids& g, double fill = 0.0);

    std::size_t index(int i, int k, int j) const
    {
        return (static_cast<std::size_t>(i) * grids.labels + k) * grids.nx + j;
    }
    double& at(int i, int k, int j) { return data[index(i, k, j)]; }
    double at(int i, int k, int j) const { return data[index(i, k, j)]; }

    std::span<double> slice(int i);
    std::span<const double> slice(int i) const;
    std::span<double> row(int i, int k);
    std::span<const double> row(int i, int k) const;
};

/// p(t_i, u_k, x_j): one probability density per label class and time.
using DensityFlow = LabelField;
/// Decoupling field v(t_i, u_k, x_j).
using GradientField = LabelField;

/// Strict feedback alpha(t,x,u) on the grid, or a relaxed feedback given as
/// a finite mixture over fixed control atoms. Grid solvers use 1-d controls.
struct FeedbackControl {
    LabelField strict;
    std::vector<double> atoms;    ///< relaxed: control values
    std::vector<double> weights;  ///< relaxed: [(i*K + k)*nx + j]*atoms + a

    const Grids& grids() const { return strict.grids; }
    bool relaxed() const { return !atoms.empty(); }

    static FeedbackControl constant(const Grids& g, double a);
    /// The same mixture at every grid point.
    static FeedbackControl mixture(const Grids& g, std::vector<double> atoms, std::vector<double> w);

    /// Throws ContractError when values leave the box or weights are not a probability vector.
    void validate(const ControlSet& box) const;
};

/// Graphon-weighted density and environment statistics of one time slice.
struct EnvSnapshot {
    std::vector<double> pbar;      ///< K x nx
    std::vector<EnvStats> stats;   ///< per label
};

EnvSnapshot environment(const LabelCoupling& coupling, const Grids& grids, std::span<const double> slice);

/// The label-independent initial law nu sampled on cell centers and
/// normalized to unit mass.
std::vector<double> initial_density(const Grids& grids, const std::function<double(double)>& shape);
std::vector<double> gaussian_initial(const Grids& grids, double mean, double sd);

/// Density flow constant in time, every label equal to `nu`.
DensityFlow constant_flow(const Grids& grids, std::span<const double> nu);

// ---------------------------------------------------------------------------
// Backward Feynman-Kac pass

struct FKOptions {
    int quad_nodes = 21;
    double v_max = 1e6;
    int threads = 1;
};

struct FKResult {
    GradientField v;
    double clamp_fraction = 0.0;  ///< density-weighted share of quadrature nodes outside the domain
    bool flagged = false;         ///< clamp_fraction above 1%
};

/// Backward recursion for v given the frozen flow. Requires sigma == 1.
/// Gaussian expectations are Gauss-Hermite sums; H is tabulated on the grid
/// after each layer and looked up by monotone cubic interpolation.
FKResult fk_backward(const DensityFlow& flow, const ModelSpec& model, const LabelCoupling& coupling,
                     const FKOptions& options = {});

// ---------------------------------------------------------------------------
// Forward Fokker-Planck pass

struct FPOptions {
    double substep_multiplier = 1.0;  ///< >= 1 refines the CFL-limited sub-step
    int threads = 1;
};

struct FPResult {
    DensityFlow flow;
    int max_substeps = 0;
    long clipped = 0;  ///< entries in (-1e-12, 0) set to zero
};

/// Conservative finite-volume evolution of every label class under
/// `feedback`, with pbar and statistics recomputed from the evolving slice.
FPResult fp_forward(const FeedbackControl& feedback, const ModelSpec& model, const LabelCoupling& coupling,
                    std::span<const double> initial, const FPOptions& options = {});

/// Same scheme for a deviator whose coefficients see the frozen environment
/// flow `env` (interpolated linearly in time between grid times).
FPResult fp_forward_frozen(const FeedbackControl& feedback, const ModelSpec& model, const LabelCoupling& coupling,
                           std::span<const double> initial, const DensityFlow& env,
                           const FPOptions& options = {});

// ---------------------------------------------------------------------------
// Payoff and best response

struct PayoffResult {
    double value = 0.0;
    std::vector<double> per_label;
    DensityFlow own_flow;
};

/// J of `control` against the frozen environment `env`: the deviator's own
/// density comes from fp_forward_frozen, rewards use left sums in time.
PayoffResult payoff(const DensityFlow& env, const FeedbackControl& control, const ModelSpec& model,
                    const LabelCoupling& coupling, std::span<const double> initial,
                    const FPOptions& options = {});

/// J for a given own flow q (no forward solve).
PayoffResult payoff_of_flow(const DensityFlow& env, const DensityFlow& own, const FeedbackControl& control,
                            const ModelSpec& model, const LabelCoupling& coupling);

/// Feedback alpha*(t,x,u) = argmax of h at (pbar, stats, v) from `env`.
FeedbackControl feedback_from_gradient(const DensityFlow& env, const GradientField& v, const ModelSpec& model,
                                       const LabelCoupling& coupling);

struct BestResponse {
    double value = 0.0;
    FeedbackControl feedback;
    GradientField gradient;
    DensityFlow own_flow;
    bool flagged = false;
};

BestResponse best_response(const DensityFlow& env, const ModelSpec& model, const LabelCoupling& coupling,
                           std::span<const double> initial, const FKOptions& fk = {},
                           const FPOptions& fp = {});

// ---------------------------------------------------------------------------
// Fixed point

struct SolverOptions {
    double damping = 0.5;
    double tol_v = 1e-4;
    double tol_m = 1e-4;
    int max_iter = 200;
    double guess_shift = 0.0;  ///< initial internal flow: nu shifted by this amount
    FKOptions fk;
    FPOptions fp;
};

struct ResidualRecord {
    int iteration = 0;
    double gradient = 0.0;
    double density = 0.0;
    double damping = 0.0;
};

struct MFGSolution {
    Grids grids;
    DensityFlow flow;
    GradientField gradient;
    FeedbackControl feedback;
    std::vector<ResidualRecord> history;
    double payoff = 0.0;
    bool converged = false;
    int iterations = 0;
    bool flagged = false;          ///< some backward pass clamped more than 1% of its nodes
    double boundary_mass = 0.0;    ///< largest mass in an outermost cell
    std::vector<double> initial;
};

/// sup over t of sum_k w_k int |a - b| dx.
double flow_l1_distance(const DensityFlow& a, const DensityFlow& b);

/// Damped iteration m <- (1 - lambda) m + lambda fp(alpha(fk(m))). Stops on
/// tolerance; on max_iter returns the best iterate with converged = false.
/// Five consecutive residual increases switch to decaying damping; a second
/// detection throws OscillationError.
MFGSolution mfg_fixed_point(const ModelSpec& model, const Graphon& graphon, const Grids& grids,
                            std::span<const double> initial, const SolverOptions& options = {});

/// K = k labels anchored in the step graphon's cells.
MFGSolution mfg_fixed_point_stepgraphon(const ModelSpec& model, const StepGraphon& step, Grids grids,
                                        std::span<const double> initial, const SolverOptions& options = {});

// ---------------------------------------------------------------------------
// Common noise

struct CommonNoiseSolution {
    MFGSolution frozen;       ///< solution of the translated deterministic system
    DensityFlow translated;   ///< frozen flow shifted by +c(t)
    double audit_error = 0.0; ///< sup |shift(translated, -c) - frozen|
    double audit_bound = 0.0; ///< 2 dx sup |d/dx frozen|
};

/// Shift every slice i by c[i]: out(x) = in(x - c[i]), linear interpolation
/// between cell centers. Mass that would leave the domain throws DomainError.
DensityFlow shift_flow(const DensityFlow& flow, std::span<const double> c);

/// Brownian path sigma_0 W on the time grid, c(0) = 0.
std::vector<double> sample_common_path(const Grids& grids, double common_sigma, std::uint64_t seed,
                                       std::uint64_t path_id);

CommonNoiseSolution common_noise_solve(const ModelSpec& model, const Graphon& graphon, const Grids& grids,
                                       std::span<const double> path, std::span<const double> initial,
                                       const SolverOptions& options = {});

} // namespace gmfg
