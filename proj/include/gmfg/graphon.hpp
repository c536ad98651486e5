#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gmfg/model.hpp"

namespace gmfg {

/// Piecewise-constant graphon on k uniform cells ((i-1)/k, i/k].
class StepGraphon {
public:
    StepGraphon(int k, std::vector<double> values);

    int k() const { return k_; }
    double value(int i, int j) const { return values_[static_cast<std::size_t>(i * k_ + j)]; }
    const std::vector<double>& values() const { return values_; }
    double anchor(int i) const { return (i + 0.5) / k_; }
    double e_max() const;

    /// Cell containing u under the left-open convention; u = 0 maps to cell 0.
    int cell(double u) const;
    double operator()(double u, double v) const { return value(cell(u), cell(v)); }

    void save_csv(const std::string& path) const;
    static StepGraphon load_csv(const std::string& path);

private:
    int k_;
    std::vector<double> values_;
};

/// Graphon G:[0,1]^2 -> [0, e_max]. Either an analytic rule or a step
/// function (which keeps its block structure available).
class Graphon {
public:
    Graphon(std::string name, std::function<double(double, double)> rule, double e_max);
    explicit Graphon(StepGraphon step, std::string name = "step");

    static Graphon constant(double c);
    static Graphon product();
    /// k equal blocks, `intra` on diagonal blocks and `inter` elsewhere.
    static Graphon sbm(int k, double inter, double intra);
    /// Uniform-attachment graphon 1 - max(u, v).
    static Graphon minmax();
    /// Dense K x K samples at cell midpoints, bilinear between midpoints,
    /// nearest sample beyond the outermost midpoints.
    static Graphon from_samples(int k, std::vector<double> samples);
    /// "constant:c", "product", "sbm:k:inter:intra", "minmax", "file:<csv>".
    static Graphon parse(const std::string& spec);

    double operator()(double u, double v) const { return rule_(u, v); }
    double e_max() const { return e_max_; }
    const std::string& name() const { return name_; }
    const StepGraphon* step() const { return step_.get(); }

private:
    void audit_range() const;

    std::string name_;
    std::function<double(double, double)> rule_;
    double e_max_;
    std::shared_ptr<const StepGraphon> step_;
};

/// Deterministic n x n interaction matrix xi_ij = G(i/n, j/n), labels u_i = i/n (1-based).
class InteractionMatrix {
public:
    InteractionMatrix(int n, std::vector<double> entries);

    int n() const { return n_; }
    double operator()(int i, int j) const { return entries_[static_cast<std::size_t>(i) * n_ + j]; }
    std::span<const double> row(int i) const
    {
        return {entries_.data() + static_cast<std::size_t>(i) * n_, static_cast<std::size_t>(n_)};
    }
    /// Label of 0-based player index i, i.e. (i+1)/n.
    double label(int i) const { return static_cast<double>(i + 1) / n_; }
    StepGraphon to_step() const { return StepGraphon(n_, entries_); }

private:
    int n_;
    std::vector<double> entries_;
};

InteractionMatrix sample_matrix(const Graphon& graphon, int n);

/// G^k(u,v) = G(u_i, u_j) on cell pairs, anchors at cell midpoints.
StepGraphon step_approximation(const Graphon& graphon, int k);

/// Graphon sampled on the solver's K-point midpoint label grid; weights 1/K.
class LabelCoupling {
public:
    LabelCoupling(const Graphon& graphon, int labels);

    int labels() const { return k_; }
    double label(int k) const { return (k + 0.5) / k_; }
    double weight() const { return 1.0 / k_; }
    double operator()(int k, int l) const { return g_[static_cast<std::size_t>(k * k_ + l)]; }
    double e_max() const { return e_max_; }

private:
    int k_;
    std::vector<double> g_;
    double e_max_;
};

/// pbar(x, u_k) = sum_l w_l G(u_k, u_l) p(x, u_l). `slice` and `out` are
/// label-major (K x nx). Negative input entries throw ContractError.
void weighted_density(const LabelCoupling& coupling, std::span<const double> slice, int nx,
                      std::span<double> out);

/// Per-label moments int p, int x p, int x^2 p of a grid slice.
struct LabelMoments {
    std::vector<double> m0, m1, m2;
};

LabelMoments label_moments(std::span<const double> slice, int labels, std::span<const double> x, double dx);

/// Environment statistics R_m(u_k) from grid moments.
EnvStats env_law_stats(const LabelCoupling& coupling, const LabelMoments& moments, int k);

/// Convenience overload computing the moments first.
EnvStats env_law_stats(const LabelCoupling& coupling, std::span<const double> slice, std::span<const double> x,
                       double dx, int k);

/// Particle form: statistics of (1/n) sum_j delta_(e_j, x_j).
EnvStats env_law_stats(std::span<const double> interaction_row, std::span<const double> positions);

/// Step kernel on (possibly non-uniform) cells.
struct StepKernel {
    std::vector<double> row_widths;
    std::vector<double> col_widths;
    std::vector<double> values;  ///< rows x cols, row-major

    static StepKernel uniform(int k, std::vector<double> values);
    std::size_t rows() const { return row_widths.size(); }
    std::size_t cols() const { return col_widths.size(); }
    double operator()(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }
};

enum class CutMode { exact, heuristic };

/// sup_{A,B} |int_{AxB} T|. Exact mode enumerates column subsets (cell
/// unions suffice; the row set follows from a sign rule) and requires at
/// most 12 cells per side. Heuristic mode alternates the sign rule between
/// rows and columns from `restarts` random starts and returns a lower bound.
double cut_norm(const StepKernel& kernel, CutMode mode, std::uint64_t seed = 0x5eed, int restarts = 32);

/// Difference f(a) - f(b) of two step graphons on their common refinement.
StepKernel difference_kernel(const StepGraphon& a, const StepGraphon& b,
                             const std::function<double(double)>& f);

struct TestMap {
    std::string name;
    std::function<double(double)> f;
};

std::vector<TestMap> default_test_family();

struct CutMetric {
    double value = 0.0;
    std::string attained_by;
    std::vector<double> per_map;
};

/// max_f cut_norm(f o Gn - f o G^{k0}), with G replaced by its k0-step approximation.
CutMetric cut_convergence_metric(const StepGraphon& gn, const Graphon& g,
                                 const std::vector<TestMap>& family = default_test_family(), int k0 = 256);

} // namespace gmfg
