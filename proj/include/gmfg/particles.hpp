#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gmfg/graphon.hpp"
#include "gmfg/meanfield.hpp"
#include "gmfg/model.hpp"
#include "gmfg/numerics.hpp"
#include "gmfg/rng.hpp"

namespace gmfg {

enum class KernelFamily { triangle, epanechnikov, gaussian };

KernelFamily parse_kernel_family(const std::string& name);
std::string kernel_family_name(KernelFamily f);

/// V_n(x) = V(x / eps) / eps^d with V a product of a 1-d profile over the
/// coordinates. Gaussian is truncated at 3 standard deviations and renormalized.
struct KernelSpec {
    KernelFamily family = KernelFamily::triangle;
    double epsilon = 1.0;
    int dim = 1;

    /// Bandwidth schedule eps_n = c * n^(-1/(2d+2)).
    static KernelSpec scheduled(KernelFamily family, int n, double c = 1.0, int dim = 1);

    /// 1-d base profile.
    double profile(double r) const;
    /// Support half-width of the base profile (1 or 3).
    double support() const;
    double value(std::span<const double> x) const;
    double at_zero() const;
};

/// Tabulated feedback for one label class: left time lookup, monotone cubic
/// in x, clamped beyond the grid.
class FeedbackTable {
public:
    FeedbackTable(const FeedbackControl& feedback, int label);

    double operator()(double t, double x) const;
    int label() const { return label_; }

private:
    double dt_;
    int nt_;
    int label_;
    std::vector<MonotoneCubic> layers_;
};

using PlayerRule = std::function<double(double t, double x)>;

/// Per-player Markovian feedback; outputs are clamped into the control set.
struct Profile {
    std::vector<PlayerRule> rules;
    ControlSet box = ControlSet::interval(-1.0, 1.0);

    double control(int i, double t, double x) const
    {
        return box.clamp(ControlVec(rules[static_cast<std::size_t>(i)](t, x)))[0];
    }
    int size() const { return static_cast<int>(rules.size()); }
    static Profile uniform(int n, PlayerRule rule, const ControlSet& box);
};

/// Piecewise-constant law on the solver's cells, sampled exactly by inverse CDF.
class InitialLaw {
public:
    InitialLaw(const Grids& grids, std::vector<double> density);
    double sample(double u) const;
    double x_lo() const { return x_lo_; }
    double dx() const { return dx_; }
    std::span<const double> density() const { return p_; }

private:
    double x_lo_;
    double dx_;
    std::vector<double> p_;
    std::vector<double> cdf_;
};

enum class FieldMethod { automatic, direct, bucket };

/// n-player state: positions (d = 1 for dynamics), labels u_i = i/n, dense
/// interaction matrix, kernel and one noise stream per player plus a common one.
class ParticleSystem {
public:
    ParticleSystem(InteractionMatrix xi, KernelSpec kernel, std::vector<double> positions, std::uint64_t seed);

    int n() const { return xi_.n(); }
    int dim() const { return kernel_.dim; }
    double label(int i) const { return xi_.label(i); }
    const InteractionMatrix& interaction() const { return xi_; }
    const KernelSpec& kernel() const { return kernel_; }
    std::span<const double> positions() const { return x_; }
    void set_positions(std::vector<double> x);

    const NoiseStream& player_stream(int i) const { return streams_[static_cast<std::size_t>(i)]; }
    const NoiseStream& common_stream() const { return common_; }
    std::uint64_t seed() const { return seed_; }

    /// (1/n) sum_j xi_ij V_n(x - X_j), self term included.
    double local_field(int i, std::span<const double> x, FieldMethod method = FieldMethod::automatic) const;

private:
    void rebuild_index();

    InteractionMatrix xi_;
    KernelSpec kernel_;
    std::vector<double> x_;
    std::uint64_t seed_;
    std::vector<NoiseStream> streams_;
    NoiseStream common_;
    std::vector<int> order_;      ///< players sorted by coordinate (d = 1)
    std::vector<double> sorted_;  ///< sorted coordinates
};

/// Statistics of (1/n) sum_j delta_(xi_ij, X_j).
EnvStats env_empirical(const ParticleSystem& system, int i);

struct StepRewards {
    std::vector<double> running;  ///< L * dt per player for this step
};

/// One Euler-Maruyama step at pre-step positions. `step_index` addresses the
/// noise streams. Returns the running-reward increments when `rewards` is set.
void step(ParticleSystem& system, const Profile& profile, const ModelSpec& model, double t, double dt,
          std::uint64_t step_index, StepRewards* rewards = nullptr, int threads = 1);

struct SimulationSpec {
    double T = 1.0;
    int steps = 100;
    int record_every = 50;
    int threads = 1;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> positions;  ///< per record
    std::vector<double> labels;
    std::vector<double> running;                 ///< accumulated per player
    std::vector<double> terminal;                ///< g(X_T, R_T) per player
    std::vector<double> common_path;             ///< sigma_0 W at each step
};

Trajectory simulate(ParticleSystem& system, const Profile& profile, const ModelSpec& model,
                    const SimulationSpec& spec);

/// Everything needed to build a fresh system per repetition.
struct SystemTemplate {
    InteractionMatrix xi;
    KernelSpec kernel;
    std::shared_ptr<const InitialLaw> initial;
};

/// Positions drawn i.i.d. from the initial law with each player's own stream.
ParticleSystem instantiate(const SystemTemplate& tmpl, std::uint64_t seed);

/// Seed of repetition r under a master seed.
std::uint64_t rep_seed(std::uint64_t master, int rep);

struct PayoffEstimate {
    std::vector<double> mean;  ///< per player
    std::vector<double> se;
    double average = 0.0;      ///< (1/n) sum_i J_i
    double average_se = 0.0;
    std::vector<double> per_rep_average;
};

/// J_i per repetition and player: [rep][player]. Repetition r always uses
/// rep_seed(master_seed, r), so two calls with different profiles share noise.
std::vector<std::vector<double>> payoff_samples(const ModelSpec& model, const SystemTemplate& tmpl,
                                                const Profile& profile, int reps, std::uint64_t master_seed,
                                                const SimulationSpec& spec);

PayoffEstimate summarize_payoffs(const std::vector<std::vector<double>>& samples);

PayoffEstimate payoff_estimate(const ModelSpec& model, const SystemTemplate& tmpl, const Profile& profile,
                               int reps, std::uint64_t master_seed, const SimulationSpec& spec);

} // namespace gmfg
