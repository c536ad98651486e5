#include "gmfg/particles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "gmfg/error.hpp"
#include "gmfg/numerics.hpp"
#include "gmfg/parallel.hpp"

namespace gmfg {

KernelFamily parse_kernel_family(const std::string& name)
{
    if (name == "triangle") return KernelFamily::triangle;
    if (name == "epanechnikov") return KernelFamily::epanechnikov;
    if (name == "gaussian") return KernelFamily::gaussian;
    throw CatalogError("unknown kernel family '" + name + "' (expected triangle, epanechnikov, gaussian)");
}

std::string kernel_family_name(KernelFamily f)
{
    switch (f) {
    case KernelFamily::triangle: return "triangle";
    case KernelFamily::epanechnikov: return "epanechnikov";
    case KernelFamily::gaussian: return "gaussian";
    }
    return "unknown";
}

KernelSpec KernelSpec::scheduled(KernelFamily family, int n, double c, int dim)
{
    if (n < 1 || dim < 1 || !(c > 0.0)) throw ContractError("bandwidth schedule needs n >= 1, d >= 1, c > 0");
    KernelSpec k;
    k.family = family;
    k.dim = dim;
    k.epsilon = c * std::pow(static_cast<double>(n), -1.0 / (2.0 * dim + 2.0));
    return k;
}

double KernelSpec::profile(double r) const
{
    double a = std::abs(r);
    switch (family) {
    case KernelFamily::triangle: return a < 1.0 ? 1.0 - a : 0.0;
    case KernelFamily::epanechnikov: return a < 1.0 ? 0.75 * (1.0 - a * a) : 0.0;
    case KernelFamily::gaussian: {
        if (a > 3.0) return 0.0;
        static const double norm = 1.0 / ((2.0 * normal_cdf(3.0) - 1.0) * std::sqrt(2.0 * std::numbers::pi));
        return norm * std::exp(-0.5 * a * a);
    }
    }
    return 0.0;
}

double KernelSpec::support() const
{
    return family == KernelFamily::gaussian ? 3.0 : 1.0;
}

double KernelSpec::value(std::span<const double> x) const
{
    double v = 1.0;
    for (double xi : x) {
        v *= profile(xi / epsilon) / epsilon;
        if (v == 0.0) return 0.0;
    }
    return v;
}

double KernelSpec::at_zero() const
{
    return std::pow(profile(0.0) / epsilon, dim);
}

// ---------------------------------------------------------------------------

FeedbackTable::FeedbackTable(const FeedbackControl& feedback, int label)
    : dt_(feedback.grids().dt()), nt_(feedback.grids().nt), label_(label)
{
    const Grids& g = feedback.grids();
    if (label < 0 || label >= g.labels) throw ContractError("feedback table label out of range");
    layers_.reserve(static_cast<std::size_t>(nt_ + 1));
    for (int i = 0; i <= nt_; ++i) {
        auto r = feedback.strict.row(i, label);
        layers_.emplace_back(g.x(0), g.dx(), std::vector<double>(r.begin(), r.end()));
    }
}

double FeedbackTable::operator()(double t, double x) const
{
    int i = static_cast<int>(std::floor(t / dt_ + 1e-9));
    i = std::clamp(i, 0, nt_);
    return layers_[static_cast<std::size_t>(i)](x);
}

Profile Profile::uniform(int n, PlayerRule rule, const ControlSet& box)
{
    Profile p;
    p.rules.assign(static_cast<std::size_t>(n), rule);
    p.box = box;
    return p;
}

InitialLaw::InitialLaw(const Grids& grids, std::vector<double> density)
    : x_lo_(grids.x_lo), dx_(grids.dx()), p_(std::move(density))
{
    if (p_.size() != static_cast<std::size_t>(grids.nx)) throw ContractError("initial law has the wrong size");
    cdf_.resize(p_.size() + 1, 0.0);
    for (std::size_t j = 0; j < p_.size(); ++j) {
        if (!(p_[j] >= 0.0)) throw ContractError("initial law must be nonnegative");
        cdf_[j + 1] = cdf_[j] + p_[j] * dx_;
    }
    if (!(cdf_.back() > 0.0)) throw ContractError("initial law has no mass");
}

double InitialLaw::sample(double u) const
{
    double target = u * cdf_.back();
    auto it = std::upper_bound(cdf_.begin() + 1, cdf_.end(), target);
    std::size_t j = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf_.begin() - 1,
                                                                      static_cast<std::ptrdiff_t>(p_.size()) - 1));
    while (p_[j] == 0.0 && j + 1 < p_.size()) ++j;
    double frac = (target - cdf_[j]) / (p_[j] * dx_);
    frac = std::clamp(frac, 0.0, 1.0);
    return x_lo_ + (static_cast<double>(j) + frac) * dx_;
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::uint64_t kCommonStream = 0xC0440000FFFFFFFFull;
constexpr std::uint32_t kInitialTag = 1;
} // namespace

ParticleSystem::ParticleSystem(InteractionMatrix xi, KernelSpec kernel, std::vector<double> positions,
                               std::uint64_t seed)
    : xi_(std::move(xi)), kernel_(kernel), seed_(seed), common_(seed, kCommonStream)
{
    if (!(kernel_.epsilon > 0.0) || kernel_.dim < 1) throw ContractError("kernel needs eps > 0 and d >= 1");
    streams_.reserve(static_cast<std::size_t>(xi_.n()));
    for (int i = 0; i < xi_.n(); ++i) streams_.emplace_back(seed, static_cast<std::uint64_t>(i));
    set_positions(std::move(positions));
}

void ParticleSystem::set_positions(std::vector<double> x)
{
    if (x.size() != static_cast<std::size_t>(n()) * static_cast<std::size_t>(dim()))
        throw ContractError("positions must have n * d entries");
    x_ = std::move(x);
    rebuild_index();
}

void ParticleSystem::rebuild_index()
{
    if (dim() != 1) {
        order_.clear();
        sorted_.clear();
        return;
    }
    order_.resize(static_cast<std::size_t>(n()));
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(),
                     [&](int a, int b) { return x_[static_cast<std::size_t>(a)] < x_[static_cast<std::size_t>(b)]; });
    sorted_.resize(order_.size());
    for (std::size_t m = 0; m < order_.size(); ++m) sorted_[m] = x_[static_cast<std::size_t>(order_[m])];
}

double ParticleSystem::local_field(int i, std::span<const double> x, FieldMethod method) const
{
    const int d = dim();
    if (x.size() != static_cast<std::size_t>(d)) throw ContractError("query point has the wrong dimension");
    auto row = xi_.row(i);
    const double inv_n = 1.0 / n();
    bool bucket = method == FieldMethod::bucket || (method == FieldMethod::automatic && d == 1);
    if (bucket && d != 1) throw ContractError("bucket index is available for d = 1 only");
    if (bucket) {
        const double reach = kernel_.support() * kernel_.epsilon;
        auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), x[0] - reach);
        auto hi = std::upper_bound(sorted_.begin(), sorted_.end(), x[0] + reach);
        double s = 0.0;
        for (auto it = lo; it != hi; ++it) {
            auto m = static_cast<std::size_t>(it - sorted_.begin());
            double diff = x[0] - *it;
            s += row[static_cast<std::size_t>(order_[m])] * kernel_.value({&diff, 1});
        }
        return s * inv_n;
    }
    std::vector<double> diff(static_cast<std::size_t>(d));
    double s = 0.0;
    for (int j = 0; j < n(); ++j) {
        double e = row[static_cast<std::size_t>(j)];
        if (e == 0.0) continue;
        for (int c = 0; c < d; ++c)
            diff[static_cast<std::size_t>(c)] = x[static_cast<std::size_t>(c)] - x_[static_cast<std::size_t>(j * d + c)];
        s += e * kernel_.value(diff);
    }
    return s * inv_n;
}

EnvStats env_empirical(const ParticleSystem& system, int i)
{
    if (system.dim() != 1) throw ContractError("environment statistics are defined for d = 1");
    return env_law_stats(system.interaction().row(i), system.positions());
}

void step(ParticleSystem& system, const Profile& profile, const ModelSpec& model, double t, double dt,
          std::uint64_t step_index, StepRewards* rewards, int threads)
{
    if (!(dt > 0.0)) throw ContractError("step needs dt > 0");
    if (system.dim() != 1) throw ContractError("particle dynamics are implemented for d = 1");
    const int n = system.n();
    if (profile.size() != n) throw ContractError("profile size does not match the player count");
    auto pos = system.positions();
    std::vector<double> next(pos.begin(), pos.end());
    if (rewards) rewards->running.assign(static_cast<std::size_t>(n), 0.0);
    const double sq = std::sqrt(dt);
    const double common = model.common_sigma != 0.0 ? model.common_sigma * sq * system.common_stream().normal(step_index, 0)
                                                    : 0.0;
    parallel_for(static_cast<std::size_t>(n), effective_threads(threads), [&](std::size_t b, std::size_t e) {
        for (std::size_t ui = b; ui < e; ++ui) {
            const int i = static_cast<int>(ui);
            const double x = pos[ui];
            const double p = system.local_field(i, {&x, 1});
            const EnvStats st = model.uses_env_stats ? env_empirical(system, i) : EnvStats{};
            const ControlVec a(profile.control(i, t, x));
            const double drift = model.drift(t, x, p, st, a);
            const double sig = model.sigma(t, x);
            double y = x + drift * dt + sig * sq * system.player_stream(i).normal(step_index, 0) + common;
            if (!std::isfinite(y)) {
                std::ostringstream os;
                os << "player " << i << " reached a non-finite position at t = " << t + dt;
                throw NumericalError(os.str());
            }
            next[ui] = y;
            if (rewards) rewards->running[ui] = model.running(t, x, p, st, a) * dt;
        }
    });
    system.set_positions(std::move(next));
}

Trajectory simulate(ParticleSystem& system, const Profile& profile, const ModelSpec& model, const SimulationSpec& spec)
{
    if (spec.steps < 1 || !(spec.T > 0.0)) throw ContractError("simulation needs T > 0 and steps >= 1");
    if (spec.record_every < 1 || spec.steps % spec.record_every != 0)
        throw ContractError("record interval must divide the step count");
    const int n = system.n();
    const double dt = spec.T / spec.steps;
    Trajectory tr;
    tr.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) tr.labels[static_cast<std::size_t>(i)] = system.label(i);
    tr.running.assign(static_cast<std::size_t>(n), 0.0);
    tr.common_path.assign(1, 0.0);
    auto record = [&](double t) {
        tr.times.push_back(t);
        tr.positions.emplace_back(system.positions().begin(), system.positions().end());
    };
    record(0.0);
    StepRewards inc;
    for (int s = 0; s < spec.steps; ++s) {
        const double t = s * dt;
        step(system, profile, model, t, dt, static_cast<std::uint64_t>(s), &inc, spec.threads);
        for (int i = 0; i < n; ++i) tr.running[static_cast<std::size_t>(i)] += inc.running[static_cast<std::size_t>(i)];
        double dc = model.common_sigma != 0.0
                        ? model.common_sigma * std::sqrt(dt) * system.common_stream().normal(static_cast<std::uint64_t>(s), 0)
                        : 0.0;
        tr.common_path.push_back(tr.common_path.back() + dc);
        if ((s + 1) % spec.record_every == 0) record((s + 1) * dt);
    }
    tr.terminal.resize(static_cast<std::size_t>(n));
    auto pos = system.positions();
    for (int i = 0; i < n; ++i) {
        const EnvStats st = model.uses_env_stats ? env_empirical(system, i) : EnvStats{};
        tr.terminal[static_cast<std::size_t>(i)] = model.terminal(pos[static_cast<std::size_t>(i)], st);
    }
    return tr;
}

ParticleSystem instantiate(const SystemTemplate& tmpl, std::uint64_t seed)
{
    if (!tmpl.initial) throw ContractError("system template needs an initial law");
    const int n = tmpl.xi.n();
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        NoiseStream s(seed, static_cast<std::uint64_t>(i));
        x[static_cast<std::size_t>(i)] = tmpl.initial->sample(s.uniform(0, 0, kInitialTag));
    }
    return ParticleSystem(tmpl.xi, tmpl.kernel, std::move(x), seed);
}

std::uint64_t rep_seed(std::uint64_t master, int rep)
{
    return splitmix64(master ^ splitmix64(0x5EEDull + static_cast<std::uint64_t>(rep)));
}

std::vector<std::vector<double>> payoff_samples(const ModelSpec& model, const SystemTemplate& tmpl,
                                                const Profile& profile, int reps, std::uint64_t master_seed,
                                                const SimulationSpec& spec)
{
    if (reps < 1) throw ContractError("payoff estimate needs reps >= 1");
    const int n = tmpl.xi.n();
    std::vector<std::vector<double>> J(static_cast<std::size_t>(reps));
    SimulationSpec inner = spec;
    inner.threads = 1;
    inner.record_every = spec.steps;
    parallel_for(static_cast<std::size_t>(reps), effective_threads(spec.threads), [&](std::size_t b, std::size_t e) {
        for (std::size_t r = b; r < e; ++r) {
            ParticleSystem sys = instantiate(tmpl, rep_seed(master_seed, static_cast<int>(r)));
            Trajectory tr = simulate(sys, profile, model, inner);
            J[r].resize(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i)
                J[r][static_cast<std::size_t>(i)] = tr.terminal[static_cast<std::size_t>(i)] + tr.running[static_cast<std::size_t>(i)];
        }
    });
    return J;
}

PayoffEstimate summarize_payoffs(const std::vector<std::vector<double>>& J)
{
    const int reps = static_cast<int>(J.size());
    if (reps < 1) throw ContractError("no payoff samples");
    const int n = static_cast<int>(J.front().size());
    PayoffEstimate est;
    est.mean.assign(static_cast<std::size_t>(n), 0.0);
    est.se.assign(static_cast<std::size_t>(n), 0.0);
    est.per_rep_average.assign(static_cast<std::size_t>(reps), 0.0);
    for (int r = 0; r < reps; ++r) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            est.mean[static_cast<std::size_t>(i)] += J[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] / reps;
            s += J[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)];
        }
        est.per_rep_average[static_cast<std::size_t>(r)] = s / n;
    }
    if (reps > 1) {
        for (int i = 0; i < n; ++i) {
            double ss = 0.0;
            for (int r = 0; r < reps; ++r) {
                double d = J[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] - est.mean[static_cast<std::size_t>(i)];
                ss += d * d;
            }
            est.se[static_cast<std::size_t>(i)] = std::sqrt(ss / (reps - 1) / reps);
        }
    }
    for (double a : est.per_rep_average) est.average += a / reps;
    if (reps > 1) {
        double ss = 0.0;
        for (double a : est.per_rep_average) ss += (a - est.average) * (a - est.average);
        est.average_se = std::sqrt(ss / (reps - 1) / reps);
    }
    return est;
}

PayoffEstimate payoff_estimate(const ModelSpec& model, const SystemTemplate& tmpl, const Profile& profile, int reps,
                               std::uint64_t master_seed, const SimulationSpec& spec)
{
    return summarize_payoffs(payoff_samples(model, tmpl, profile, reps, master_seed, spec));
}

} // namespace gmfg
