#include "gmfg/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "gmfg/error.hpp"

namespace gmfg {

ControlSet::ControlSet(std::vector<double> lower, std::vector<double> upper)
    : lower_(std::move(lower)), upper_(std::move(upper))
{
    if (lower_.empty() || lower_.size() != upper_.size() || lower_.size() > kMaxControlDim)
        throw ContractError("control set needs 1.." + std::to_string(kMaxControlDim) + " matching bounds");
    for (std::size_t k = 0; k < lower_.size(); ++k)
        if (!(lower_[k] < upper_[k])) throw ContractError("control set bounds must satisfy lower < upper");
}

bool ControlSet::contains(const ControlVec& a, double slack) const
{
    if (a.dim != dim()) return false;
    for (int k = 0; k < dim(); ++k)
        if (a[k] < lower(k) - slack || a[k] > upper(k) + slack) return false;
    return true;
}

ControlVec ControlSet::clamp(ControlVec a) const
{
    a.dim = dim();
    for (int k = 0; k < dim(); ++k) a[k] = std::clamp(a[k], lower(k), upper(k));
    return a;
}

ControlVec ControlSet::center() const
{
    ControlVec a;
    a.dim = dim();
    for (int k = 0; k < dim(); ++k) a[k] = 0.5 * (lower(k) + upper(k));
    return a;
}

std::vector<ControlVec> ControlSet::grid(int per_dim) const
{
    if (per_dim < 2) throw ContractError("control grid needs at least 2 points per dimension");
    std::size_t total = 1;
    for (int k = 0; k < dim(); ++k) total *= static_cast<std::size_t>(per_dim);
    std::vector<ControlVec> out(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rem = idx;
        ControlVec a;
        a.dim = dim();
        for (int k = 0; k < dim(); ++k) {
            auto g = static_cast<double>(rem % static_cast<std::size_t>(per_dim));
            rem /= static_cast<std::size_t>(per_dim);
            a[k] = lower(k) + (upper(k) - lower(k)) * g / (per_dim - 1);
        }
        out[idx] = a;
    }
    return out;
}

void check_nondegenerate(const ModelSpec& model, double t, double x)
{
    double s = model.sigma(t, x);
    if (!(s * s >= model.theta) || s == 0.0) {
        std::ostringstream os;
        os << "non-degeneracy violated for model '" << model.name << "': sigma(" << t << ", " << x
           << ")^2 = " << s * s << " < theta = " << model.theta;
        throw NondegeneracyError(os.str());
    }
}

double evaluate_h(const ModelSpec& model, double t, double x, double p, const EnvStats& stats, double z,
                  const ControlVec& a)
{
    double s = model.sigma(t, x);
    if (s == 0.0 || !std::isfinite(s)) check_nondegenerate(model, t, x);
    return model.drift(t, x, p, stats, a) * (z / s) + model.running(t, x, p, stats, a);
}

namespace {

constexpr int kCoarsePoints = 33;
constexpr double kTieTolerance = 1e-9;

double golden_section(const std::function<double(double)>& f, double lo, double hi)
{
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 200 && (b - a) > 1e-12 * std::max(1.0, std::abs(a) + std::abs(b)); ++it) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    double mid = 0.5 * (a + b);
    // endpoints of the bracket can beat the interior point when the max sits on the box boundary
    double best = mid, fbest = f(mid);
    for (double cand : {lo, hi}) {
        double fv = f(cand);
        if (fv > fbest) {
            fbest = fv;
            best = cand;
        }
    }
    return best;
}

} // namespace

HamiltonianEval maximize_h_generic(const ModelSpec& model, double t, double x, double p,
                                   const EnvStats& stats, double z)
{
    const ControlSet& box = model.control_set;
    const int dim = box.dim();
    auto grid = box.grid(kCoarsePoints);
    std::vector<double> values(grid.size());
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        values[g] = evaluate_h(model, t, x, p, stats, z, grid[g]);
        if (values[g] > values[best]) best = g;
    }
    auto coords = [&](std::size_t idx) {
        std::array<int, kMaxControlDim> c{};
        for (int k = 0; k < dim; ++k) {
            c[static_cast<std::size_t>(k)] = static_cast<int>(idx % kCoarsePoints);
            idx /= kCoarsePoints;
        }
        return c;
    };
    auto best_c = coords(best);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (values[g] < values[best] - kTieTolerance) continue;
        auto c = coords(g);
        int dist = 0;
        for (int k = 0; k < dim; ++k)
            dist = std::max(dist, std::abs(c[static_cast<std::size_t>(k)] - best_c[static_cast<std::size_t>(k)]));
        if (dist > 1) {
            std::ostringstream os;
            os << "maximizer ambiguity for model '" << model.name << "' at (t=" << t << ", x=" << x
               << ", z=" << z << "): separated grid points tie within " << kTieTolerance;
            throw AmbiguityError(os.str());
        }
    }

    ControlVec a = grid[best];
    const int sweeps = dim == 1 ? 1 : 4;
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        for (int k = 0; k < dim; ++k) {
            double step = (box.upper(k) - box.lower(k)) / (kCoarsePoints - 1);
            double lo = std::max(box.lower(k), a[k] - step);
            double hi = std::min(box.upper(k), a[k] + step);
            auto f = [&](double ak) {
                ControlVec trial = a;
                trial[k] = ak;
                return evaluate_h(model, t, x, p, stats, z, trial);
            };
            a[k] = golden_section(f, lo, hi);
        }
    }
    return {evaluate_h(model, t, x, p, stats, z, a), a};
}

HamiltonianEval maximize_h(const ModelSpec& model, double t, double x, double p, const EnvStats& stats,
                           double z)
{
    if (model.argmax) {
        ControlVec a = model.control_set.clamp((*model.argmax)(t, x, p, stats, z));
        return {evaluate_h(model, t, x, p, stats, z, a), a};
    }
    if (!model.concave)
        throw ContractError("model '" + model.name +
                            "' provides neither an analytic maximizer nor a concavity flag");
    return maximize_h_generic(model, t, x, p, stats, z);
}

// ---------------------------------------------------------------------------
// Catalog

namespace {

using Params = std::map<std::string, double>;

Params merge(Params defaults, const Params& overrides, const std::string& name)
{
    for (const auto& [k, v] : overrides) {
        auto it = defaults.find(k);
        if (it == defaults.end()) throw CatalogError("model '" + name + "' has no parameter '" + k + "'");
        it->second = v;
    }
    return defaults;
}

const std::map<std::string, Params>& catalog()
{
    static const std::map<std::string, Params> table = {
        {"lq-congestion",
         {{"c_p", 1.0}, {"c_s", 0.1}, {"target", 1.0}, {"terminal_weight", 1.0}, {"control_bound", 2.0},
          {"sigma", 1.0}, {"common_sigma", 0.0}}},
        {"monotone",
         {{"c", 1.0}, {"target", 1.0}, {"terminal_weight", 0.5}, {"control_bound", 2.0}, {"sigma", 1.0},
          {"common_sigma", 0.0}}},
        {"kinetic-bounded",
         {{"k_p", 0.5}, {"k_s", 0.5}, {"gamma", 2.0}, {"target", 1.0}, {"terminal_weight", 0.5},
          {"control_bound", 2.0}, {"sigma", 1.0}, {"common_sigma", 0.0}}},
        {"flocking",
         {{"c", 1.0}, {"terminal_weight", 0.5}, {"control_bound", 2.0}, {"sigma", 1.0},
          {"common_sigma", 0.5}}},
    };
    return table;
}

// b = a + offset(t,x,p,r): maximizer of a*z/sigma - a^2/2 over the box is clamp(z/sigma).
ArgmaxFn clamp_argmax(double sigma)
{
    return [sigma](double, double, double, const EnvStats&, double z) { return ControlVec(z / sigma); };
}

} // namespace

std::vector<std::string> builtin_models()
{
    std::vector<std::string> names;
    for (const auto& [k, v] : catalog()) names.push_back(k);
    return names;
}

std::map<std::string, double> builtin_defaults(const std::string& name)
{
    auto it = catalog().find(name);
    if (it == catalog().end()) throw CatalogError("unknown model '" + name + "'");
    return it->second;
}

ModelSpec make_builtin_model(const std::string& name, const std::map<std::string, double>& overrides)
{
    Params prm = merge(builtin_defaults(name), overrides, name);
    ModelSpec m;
    m.name = name;
    m.params = prm;
    const double bound = prm.at("control_bound");
    const double sigma = prm.at("sigma");
    if (!(bound > 0.0)) throw CatalogError("control_bound must be positive");
    if (!(sigma > 0.0)) throw CatalogError("sigma must be positive");
    m.control_set = ControlSet::interval(-bound, bound);
    m.sigma = [sigma](double, double) { return sigma; };
    m.theta = sigma * sigma;
    m.common_sigma = prm.at("common_sigma");
    m.concave = true;
    m.argmax = clamp_argmax(sigma);

    if (name == "lq-congestion") {
        const double cp = prm.at("c_p"), cs = prm.at("c_s");
        const double target = prm.at("target"), kappa = prm.at("terminal_weight");
        m.drift = [](double, double, double, const EnvStats&, const ControlVec& a) { return a[0]; };
        // crowding: weighted mean-square distance to the environment, int e (x - y)^2 r(de,dy)
        m.running = [cp, cs](double, double x, double p, const EnvStats& r, const ControlVec& a) {
            double crowd = x * x * r.w0 - 2.0 * x * r.wmean + r.wsecond;
            return -0.5 * a[0] * a[0] - cp * p - cs * crowd;
        };
        m.terminal = [target, kappa](double x, const EnvStats&) { return -kappa * (x - target) * (x - target); };
        m.uses_env_stats = cs != 0.0;
    } else if (name == "monotone") {
        const double c = prm.at("c");
        const double target = prm.at("target"), kappa = prm.at("terminal_weight");
        m.drift = [](double, double, double, const EnvStats&, const ControlVec& a) { return a[0]; };
        m.running = [c](double, double, double p, const EnvStats&, const ControlVec& a) {
            return -0.5 * a[0] * a[0] - c * p;
        };
        m.terminal = [target, kappa](double x, const EnvStats&) { return -kappa * (x - target) * (x - target); };
        m.separated = SeparatedForm{[c](double, double, double p, const EnvStats&) { return -c * p; }};
        m.uses_env_stats = false;
    } else if (name == "kinetic-bounded") {
        const double kp = prm.at("k_p"), ks = prm.at("k_s"), gamma = prm.at("gamma");
        const double target = prm.at("target"), kappa = prm.at("terminal_weight");
        m.drift = [kp, ks, gamma](double, double x, double p, const EnvStats& r, const ControlVec& a) {
            return a[0] - kp * std::tanh(gamma * p) + ks * std::tanh(r.mean - x);
        };
        m.running = [](double, double, double, const EnvStats&, const ControlVec& a) { return -0.5 * a[0] * a[0]; };
        m.terminal = [target, kappa](double x, const EnvStats&) { return -kappa * (x - target) * (x - target); };
        m.uses_env_stats = ks != 0.0;
    } else if (name == "flocking") {
        const double c = prm.at("c"), kappa = prm.at("terminal_weight");
        m.drift = [](double, double, double, const EnvStats&, const ControlVec& a) { return a[0]; };
        m.running = [c](double, double, double p, const EnvStats&, const ControlVec& a) {
            return -0.5 * a[0] * a[0] - c * p;
        };
        // distance to the population mean: invariant under joint translation
        m.terminal = [kappa](double x, const EnvStats& r) { return -kappa * (x - r.mean) * (x - r.mean); };
        m.separated = SeparatedForm{[c](double, double, double p, const EnvStats&) { return -c * p; }};
        m.uses_env_stats = true;
    }
    return m;
}

ModelSpec translate_model(const ModelSpec& model, std::vector<double> path, double dt)
{
    if (path.empty() || !(dt > 0.0)) throw ContractError("translation path needs samples and positive dt");
    auto shared = std::make_shared<const std::vector<double>>(std::move(path));
    auto at = [shared, dt](double t) {
        const auto& c = *shared;
        double s = t / dt;
        if (s <= 0.0) return c.front();
        auto i = static_cast<std::size_t>(s);
        if (i + 1 >= c.size()) return c.back();
        double f = s - static_cast<double>(i);
        // f == 0 on grid times, so grid lookups are exact
        return f == 0.0 ? c[i] : c[i] + f * (c[i + 1] - c[i]);
    };
    ModelSpec out = model;
    out.name = model.name + "@translated";
    out.common_sigma = 0.0;
    auto drift = model.drift;
    auto running = model.running;
    auto terminal = model.terminal;
    auto sigma = model.sigma;
    out.drift = [drift, at](double t, double y, double p, const EnvStats& r, const ControlVec& a) {
        double c = at(t);
        return drift(t, y + c, p, r.shifted(c), a);
    };
    out.running = [running, at](double t, double y, double p, const EnvStats& r, const ControlVec& a) {
        double c = at(t);
        return running(t, y + c, p, r.shifted(c), a);
    };
    double c_terminal = shared->back();
    out.terminal = [terminal, c_terminal](double y, const EnvStats& r) {
        return terminal(y + c_terminal, r.shifted(c_terminal));
    };
    out.sigma = [sigma, at](double t, double y) { return sigma(t, y + at(t)); };
    if (model.argmax) {
        auto argmax = *model.argmax;
        out.argmax = [argmax, at](double t, double y, double p, const EnvStats& r, double z) {
            double c = at(t);
            return argmax(t, y + c, p, r.shifted(c), z);
        };
    }
    if (model.separated) {
        auto coupling = model.separated->coupling;
        out.separated = SeparatedForm{[coupling, at](double t, double y, double p, const EnvStats& r) {
            double c = at(t);
            return coupling(t, y + c, p, r.shifted(c));
        }};
    }
    return out;
}

} // namespace gmfg
