#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gmfg {

/// Fixed-capacity control vector; control dimension is at most kMaxControlDim.
inline constexpr int kMaxControlDim = 4;

struct ControlVec {
    std::array<double, kMaxControlDim> v{};
    int dim = 1;

    ControlVec() = default;
    explicit ControlVec(double a) : dim(1) { v[0] = a; }

    double& operator[](int k) { return v[static_cast<std::size_t>(k)]; }
    double operator[](int k) const { return v[static_cast<std::size_t>(k)]; }
};

/// Compact box A = prod_k [lower_k, upper_k].
class ControlSet {
public:
    ControlSet(std::vector<double> lower, std::vector<double> upper);
    static ControlSet interval(double lo, double hi) { return ControlSet({lo}, {hi}); }

    int dim() const { return static_cast<int>(lower_.size()); }
    double lower(int k) const { return lower_[static_cast<std::size_t>(k)]; }
    double upper(int k) const { return upper_[static_cast<std::size_t>(k)]; }
    bool contains(const ControlVec& a, double slack = 0.0) const;
    ControlVec clamp(ControlVec a) const;
    ControlVec center() const;

    /// Tensor grid with `per_dim` points per dimension, endpoints included.
    std::vector<ControlVec> grid(int per_dim) const;

private:
    std::vector<double> lower_;
    std::vector<double> upper_;
};

/// Finite statistics of a measure r on E x R. Models see r only through these.
struct EnvStats {
    double w0 = 0.0;       ///< int e r(de,dy)
    double wmean = 0.0;    ///< int e*y r(de,dy)
    double mean = 0.0;     ///< int y r(de,dy)
    double wsecond = 0.0;  ///< int e*y^2 r(de,dy)

    /// Statistics of the push-forward under (e, y) -> (e, y + c).
    EnvStats shifted(double c) const
    {
        return {w0, wmean + c * w0, mean + c, wsecond + 2.0 * c * wmean + c * c * w0};
    }
};

using DriftFn = std::function<double(double t, double x, double p, const EnvStats& r, const ControlVec& a)>;
using RewardFn = DriftFn;
using TerminalFn = std::function<double(double x, const EnvStats& r)>;
using SigmaFn = std::function<double(double t, double x)>;
using ArgmaxFn = std::function<ControlVec(double t, double x, double p, const EnvStats& r, double z)>;
using CouplingFn = std::function<double(double t, double x, double p, const EnvStats& r)>;

/// Separated structure b = b(t,x,a), L = Lbar(t,x,a) + Lunder(t,x,p,r),
/// required by the monotonicity check.
struct SeparatedForm {
    CouplingFn coupling;  ///< the population-dependent part of L
};

/// Coefficient bundle shared by the grid solver and the particle simulator.
/// State dimension is 1; sigma is scalar.
struct ModelSpec {
    std::string name;
    ControlSet control_set = ControlSet::interval(-1.0, 1.0);
    DriftFn drift;
    RewardFn running;
    TerminalFn terminal;
    SigmaFn sigma;
    double common_sigma = 0.0;
    double theta = 1.0;  ///< non-degeneracy floor: sigma^2 >= theta

    std::optional<ArgmaxFn> argmax;  ///< analytic maximizer of h, if known
    bool concave = false;            ///< h concave in a: generic search is safe
    bool uses_env_stats = true;      ///< false lets simulators skip the O(n^2) statistics
    std::optional<SeparatedForm> separated;

    /// Parameter values, reported in run metadata as artifact choices.
    std::map<std::string, double> params;
};

/// Hamiltonian value and its maximizer.
struct HamiltonianEval {
    double value = 0.0;
    ControlVec maximizer;
};

/// h(t,x,p,r,z,a) = b * z / sigma + L.
double evaluate_h(const ModelSpec& model, double t, double x, double p, const EnvStats& stats, double z,
                  const ControlVec& a);

/// sup over A of h. Uses the analytic oracle when present; otherwise the
/// generic coarse-grid + golden-section search (requires `concave`).
HamiltonianEval maximize_h(const ModelSpec& model, double t, double x, double p, const EnvStats& stats,
                           double z);

/// Generic search regardless of the oracle: 33 grid points per dimension,
/// then coordinate-wise golden-section refinement around the best cell.
/// Throws AmbiguityError when separated grid points tie within 1e-9.
HamiltonianEval maximize_h_generic(const ModelSpec& model, double t, double x, double p,
                                   const EnvStats& stats, double z);

/// Throws NondegeneracyError when sigma(t,x)^2 < theta.
void check_nondegenerate(const ModelSpec& model, double t, double x);

/// Names of the built-in models.
std::vector<std::string> builtin_models();

/// Builds a catalog model; `overrides` replace its default parameters.
/// Unknown names and unknown parameter keys throw CatalogError.
ModelSpec make_builtin_model(const std::string& name, const std::map<std::string, double>& overrides = {});

/// Default parameter set of a catalog model.
std::map<std::string, double> builtin_defaults(const std::string& name);

/// Copy of `model` with coefficients translated along the frozen path c:
/// b^c(t,y,...) = b(t, y + c(t), ..., r shifted by c(t), ...), likewise L, sigma,
/// and g^c(y, r) = g(y + c(T), r shifted by c(T)). Common noise is removed.
/// `path` holds c at uniformly spaced times 0, dt, ..., T.
ModelSpec translate_model(const ModelSpec& model, std::vector<double> path, double dt);

} // namespace gmfg
