#include "gmfg/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gmfg/error.hpp"
#include "gmfg/numerics.hpp"
#include "gmfg/parallel.hpp"
#include "gmfg/rng.hpp"

namespace gmfg {

// ---------------------------------------------------------------------------
// Grids and fields

std::vector<double> Grids::xs() const
{
    std::vector<double> out(static_cast<std::size_t>(nx));
    for (int j = 0; j < nx; ++j) out[static_cast<std::size_t>(j)] = x(j);
    return out;
}

void Grids::validate() const
{
    if (!(T > 0.0)) throw ContractError("grid horizon T must be positive");
    if (nt < 1) throw ContractError("time grid needs nt >= 1");
    if (nx < 3) throw ContractError("space grid needs nx >= 3");
    if (!(x_hi > x_lo)) throw ContractError("space domain must satisfy x_lo < x_hi");
    if (labels < 1) throw ContractError("label grid needs K >= 1");
}

bool Grids::same_as(const Grids& o) const
{
    return T == o.T && nt == o.nt && x_lo == o.x_lo && x_hi == o.x_hi && nx == o.nx && labels == o.labels;
}

LabelField::LabelField(const Grids& g, double fill)
    : grids(g), data(static_cast<std::size_t>(g.nt + 1) * g.labels * g.nx, fill)
{
}

std::span<double> LabelField::slice(int i)
{
    const std::size_t n = static_cast<std::size_t>(grids.labels) * grids.nx;
    return {data.data() + static_cast<std::size_t>(i) * n, n};
}

std::span<const double> LabelField::slice(int i) const
{
    const std::size_t n = static_cast<std::size_t>(grids.labels) * grids.nx;
    return {data.data() + static_cast<std::size_t>(i) * n, n};
}

std::span<double> LabelField::row(int i, int k)
{
    return {data.data() + index(i, k, 0), static_cast<std::size_t>(grids.nx)};
}

std::span<const double> LabelField::row(int i, int k) const
{
    return {data.data() + index(i, k, 0), static_cast<std::size_t>(grids.nx)};
}

FeedbackControl FeedbackControl::constant(const Grids& g, double a)
{
    FeedbackControl f;
    f.strict = LabelField(g, a);
    return f;
}

FeedbackControl FeedbackControl::mixture(const Grids& g, std::vector<double> atoms, std::vector<double> w)
{
    if (atoms.empty() || atoms.size() != w.size()) throw ContractError("mixture needs matching atoms and weights");
    FeedbackControl f;
    double mean = 0.0;
    for (std::size_t a = 0; a < atoms.size(); ++a) mean += w[a] * atoms[a];
    f.strict = LabelField(g, mean);
    f.atoms = std::move(atoms);
    const std::size_t points = f.strict.data.size();
    f.weights.resize(points * f.atoms.size());
    for (std::size_t p = 0; p < points; ++p)
        std::copy(w.begin(), w.end(), f.weights.begin() + static_cast<std::ptrdiff_t>(p * f.atoms.size()));
    return f;
}

void FeedbackControl::validate(const ControlSet& box) const
{
    if (box.dim() != 1) throw ContractError("grid feedback supports 1-d controls only");
    if (relaxed()) {
        for (double a : atoms)
            if (!box.contains(ControlVec(a), 1e-12)) throw ContractError("mixture atom outside the control set");
        const std::size_t na = atoms.size();
        if (weights.size() != strict.data.size() * na) throw ContractError("mixture weights have the wrong shape");
        for (std::size_t p = 0; p < strict.data.size(); ++p) {
            double s = 0.0;
            for (std::size_t a = 0; a < na; ++a) {
                double w = weights[p * na + a];
                if (!(w >= 0.0)) throw ContractError("mixture weights must be nonnegative");
                s += w;
            }
            if (std::abs(s - 1.0) > 1e-12) throw ContractError("mixture weights must sum to 1");
        }
        return;
    }
    for (double a : strict.data)
        if (!box.contains(ControlVec(a), 1e-12)) throw ContractError("feedback value outside the control set");
}

EnvSnapshot environment(const LabelCoupling& coupling, const Grids& grids, std::span<const double> slice)
{
    EnvSnapshot e;
    e.pbar.resize(slice.size());
    weighted_density(coupling, slice, grids.nx, e.pbar);
    auto xs = grids.xs();
    auto mo = label_moments(slice, grids.labels, xs, grids.dx());
    e.stats.resize(static_cast<std::size_t>(grids.labels));
    for (int k = 0; k < grids.labels; ++k) e.stats[static_cast<std::size_t>(k)] = env_law_stats(coupling, mo, k);
    return e;
}

std::vector<double> initial_density(const Grids& grids, const std::function<double(double)>& shape)
{
    std::vector<double> p(static_cast<std::size_t>(grids.nx));
    double mass = 0.0;
    for (int j = 0; j < grids.nx; ++j) {
        double v = shape(grids.x(j));
        if (!(v >= 0.0)) throw ContractError("initial density must be nonnegative");
        p[static_cast<std::size_t>(j)] = v;
        mass += v * grids.dx();
    }
    if (!(mass > 0.0)) throw ContractError("initial density has no mass on the grid");
    for (double& v : p) v /= mass;
    return p;
}

std::vector<double> gaussian_initial(const Grids& grids, double mean, double sd)
{
    if (!(sd > 0.0)) throw ContractError("initial standard deviation must be positive");
    return initial_density(grids, [mean, sd](double x) {
        double z = (x - mean) / sd;
        return std::exp(-0.5 * z * z);
    });
}

DensityFlow constant_flow(const Grids& grids, std::span<const double> nu)
{
    if (nu.size() != static_cast<std::size_t>(grids.nx)) throw ContractError("initial density has the wrong size");
    DensityFlow f(grids);
    for (int i = 0; i <= grids.nt; ++i)
        for (int k = 0; k < grids.labels; ++k) std::copy(nu.begin(), nu.end(), f.row(i, k).begin());
    return f;
}

namespace {

void check_initial(const Grids& g, std::span<const double> initial)
{
    if (initial.size() != static_cast<std::size_t>(g.nx)) throw ContractError("initial density has the wrong size");
    double mass = 0.0;
    for (double p : initial) {
        if (!(p >= 0.0)) throw ContractError("initial density must be nonnegative");
        mass += p * g.dx();
    }
    if (std::abs(mass - 1.0) > 1e-8) {
        std::ostringstream os;
        os << "initial density must integrate to 1 (got " << mass << ")";
        throw ContractError(os.str());
    }
}

void require_unit_sigma(const ModelSpec& model, const Grids& g)
{
    constexpr int probes = 50;
    for (int a = 0; a < probes; ++a)
        for (int b = 0; b < probes; ++b) {
            double t = g.T * a / (probes - 1);
            double x = g.x_lo + (g.x_hi - g.x_lo) * b / (probes - 1);
            double s = model.sigma(t, x);
            if (std::abs(s - 1.0) > 1e-12)
                throw ContractError("the backward pass requires sigma == 1 (model '" + model.name + "')");
        }
}

void require_scalar_control(const ModelSpec& model)
{
    if (model.control_set.dim() != 1) throw ContractError("grid solver supports 1-d controls only");
}

} // namespace

// ---------------------------------------------------------------------------
// Backward pass

FKResult fk_backward(const DensityFlow& flow, const ModelSpec& model, const LabelCoupling& coupling,
                     const FKOptions& options)
{
    const Grids& g = flow.grids;
    g.validate();
    if (coupling.labels() != g.labels) throw ContractError("label coupling does not match the flow's label grid");
    require_unit_sigma(model, g);
    require_scalar_control(model);

    const int nt = g.nt, nx = g.nx, K = g.labels;
    const double dt = g.dt(), dx = g.dx();
    const auto rule = gauss_hermite(options.quad_nodes);
    const int Q = static_cast<int>(rule.nodes.size());
    const auto xs = g.xs();
    const int threads = effective_threads(options.threads);

    std::vector<EnvSnapshot> env(static_cast<std::size_t>(nt + 1));
    for (int i = 0; i <= nt; ++i) env[static_cast<std::size_t>(i)] = environment(coupling, g, flow.slice(i));

    FKResult res;
    res.v = GradientField(g);
    LabelField H(g), M(g);

    auto tabulate_h = [&](int i) {
        const auto& e = env[static_cast<std::size_t>(i)];
        const double t = g.t(i);
        parallel_for(static_cast<std::size_t>(K), threads, [&](std::size_t b, std::size_t end) {
            for (std::size_t kk = b; kk < end; ++kk) {
                int k = static_cast<int>(kk);
                const EnvStats& st = e.stats[kk];
                auto hrow = H.row(i, k);
                for (int j = 0; j < nx; ++j) {
                    double p = e.pbar[kk * static_cast<std::size_t>(nx) + static_cast<std::size_t>(j)];
                    hrow[static_cast<std::size_t>(j)] = maximize_h(model, t, xs[static_cast<std::size_t>(j)], p, st,
                                                                   res.v.at(i, k, j)).value;
                }
                pchip_slopes(hrow, M.row(i, k));
            }
        });
    };

    auto audit_layer = [&](int i) {
        for (double v : res.v.slice(i)) {
            if (!std::isfinite(v) || std::abs(v) > options.v_max) {
                std::ostringstream os;
                os << "gradient field exceeds v_max = " << options.v_max << " at t = " << g.t(i);
                throw NumericalError(os.str());
            }
        }
    };

    // terminal layer: v(T, x) = d/dx g(x, R_T)
    {
        const auto& eT = env[static_cast<std::size_t>(nt)];
        for (int k = 0; k < K; ++k) {
            const EnvStats& st = eT.stats[static_cast<std::size_t>(k)];
            for (int j = 0; j < nx; ++j) {
                double x = xs[static_cast<std::size_t>(j)];
                double h = 1e-5 * std::max(1.0, std::abs(x));
                res.v.at(nt, k, j) = (model.terminal(x + h, st) - model.terminal(x - h, st)) / (2.0 * h);
            }
        }
        audit_layer(nt);
        tabulate_h(nt);
    }

    // Time rule for the running integral over [t_i, T]. The first interval
    // uses H(t_{i+1}) at the half-step lag dt/2; the rest is the trapezoid
    // rule on the grid layers t_{i+1}, ..., t_N at lags (l - i) dt.
    struct Lag {
        int layer;
        double tau;
        double weight;
    };
    auto lags_for = [&](int i) {
        std::vector<Lag> lags;
        lags.push_back({i + 1, 0.5 * dt, dt});
        if (i + 1 < nt) {
            for (int l = i + 1; l <= nt; ++l) {
                double w = (l == i + 1 || l == nt) ? 0.5 * dt : dt;
                lags.push_back({l, (l - i) * dt, w});
            }
        }
        return lags;
    };

    // cumulative mass per (i, k) row, used to weight clamped nodes
    std::vector<double> clamped_by_label(static_cast<std::size_t>(K), 0.0);
    std::vector<double> total_by_label(static_cast<std::size_t>(K), 0.0);

    for (int i = nt - 1; i >= 0; --i) {
        const double tau_T = g.T - g.t(i);
        const double sT = std::sqrt(tau_T);
        const auto& eT = env[static_cast<std::size_t>(nt)];
        parallel_for(static_cast<std::size_t>(K), threads, [&](std::size_t b, std::size_t end) {
            std::vector<double> cum(static_cast<std::size_t>(nx) + 1);
            for (std::size_t kk = b; kk < end; ++kk) {
                int k = static_cast<int>(kk);
                auto out = res.v.row(i, k);
                const EnvStats& stT = eT.stats[kk];
                for (int j = 0; j < nx; ++j) {
                    double x = xs[static_cast<std::size_t>(j)];
                    double s = 0.0;
                    for (int q = 0; q < Q; ++q) {
                        double z = rule.nodes[static_cast<std::size_t>(q)];
                        s += rule.weights[static_cast<std::size_t>(q)] * model.terminal(x + sT * z, stT) * z;
                    }
                    out[static_cast<std::size_t>(j)] = s / sT;
                }

                auto prow = flow.row(i, k);
                cum[0] = 0.0;
                for (int j = 0; j < nx; ++j)
                    cum[static_cast<std::size_t>(j) + 1] = cum[static_cast<std::size_t>(j)] + prow[static_cast<std::size_t>(j)] * dx;
                const double mass = cum[static_cast<std::size_t>(nx)];
                double clamped = 0.0, total = 0.0;

                for (const Lag& lag : lags_for(i)) {
                    const double st = std::sqrt(lag.tau);
                    auto hrow = H.row(lag.layer, k);
                    auto mrow = M.row(lag.layer, k);
                    for (int q = 0; q < Q; ++q) {
                        const double z = rule.nodes[static_cast<std::size_t>(q)];
                        const double w = rule.weights[static_cast<std::size_t>(q)];
                        const double c = lag.weight * w * z / st;
                        const double u = st * z / dx;  // shift in cells
                        const double fo = std::floor(u);
                        const auto o = static_cast<long>(fo);
                        const auto hb = hermite_basis(u - fo);
                        // j with 0 <= j + o <= nx - 2 use the cubic; the rest clamp to the end values
                        long jlo = std::max(0L, -o);
                        long jhi = std::min(static_cast<long>(nx) - 1, static_cast<long>(nx) - 2 - o);
                        for (long j = 0; j < std::min(jlo, static_cast<long>(nx)); ++j)
                            out[static_cast<std::size_t>(j)] += c * hrow[0];
                        for (long j = jlo; j <= jhi; ++j) {
                            auto a = static_cast<std::size_t>(j + o);
                            out[static_cast<std::size_t>(j)] +=
                                c * (hb.h00 * hrow[a] + hb.h10 * mrow[a] + hb.h01 * hrow[a + 1] + hb.h11 * mrow[a + 1]);
                        }
                        for (long j = std::max(jhi + 1, jlo); j < nx; ++j)
                            out[static_cast<std::size_t>(j)] += c * hrow[static_cast<std::size_t>(nx) - 1];

                        // nodes outside [x_lo, x_hi]: j + 0.5 + u < 0 or j + 0.5 + u > nx
                        long left = std::clamp(static_cast<long>(std::ceil(-0.5 - u)), 0L, static_cast<long>(nx));
                        long right = std::clamp(static_cast<long>(std::floor(nx - 0.5 - u)) + 1, 0L,
                                                static_cast<long>(nx));
                        double out_mass = cum[static_cast<std::size_t>(left)] + (mass - cum[static_cast<std::size_t>(right)]);
                        clamped += w * out_mass;
                        total += w * mass;
                    }
                }
                clamped_by_label[kk] += clamped;
                total_by_label[kk] += total;
            }
        });
        audit_layer(i);
        tabulate_h(i);
    }

    double clamped = 0.0, total = 0.0;
    for (int k = 0; k < K; ++k) {
        clamped += clamped_by_label[static_cast<std::size_t>(k)];
        total += total_by_label[static_cast<std::size_t>(k)];
    }
    res.clamp_fraction = total > 0.0 ? clamped / total : 0.0;
    res.flagged = res.clamp_fraction > 0.01;
    return res;
}

// ---------------------------------------------------------------------------
// Forward pass

namespace {

double drift_at(const ModelSpec& model, const FeedbackControl& fb, std::size_t point, double t, double x, double p,
                const EnvStats& st)
{
    if (!fb.relaxed()) return model.drift(t, x, p, st, ControlVec(fb.strict.data[point]));
    const std::size_t na = fb.atoms.size();
    double s = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
        double w = fb.weights[point * na + a];
        if (w != 0.0) s += w * model.drift(t, x, p, st, ControlVec(fb.atoms[a]));
    }
    return s;
}

double running_at(const ModelSpec& model, const FeedbackControl& fb, std::size_t point, double t, double x,
                  double p, const EnvStats& st)
{
    if (!fb.relaxed()) return model.running(t, x, p, st, ControlVec(fb.strict.data[point]));
    const std::size_t na = fb.atoms.size();
    double s = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
        double w = fb.weights[point * na + a];
        if (w != 0.0) s += w * model.running(t, x, p, st, ControlVec(fb.atoms[a]));
    }
    return s;
}

EnvSnapshot blend(const EnvSnapshot& a, const EnvSnapshot& b, double theta)
{
    if (theta == 0.0) return a;
    EnvSnapshot e;
    e.pbar.resize(a.pbar.size());
    for (std::size_t n = 0; n < a.pbar.size(); ++n) e.pbar[n] = (1 - theta) * a.pbar[n] + theta * b.pbar[n];
    e.stats.resize(a.stats.size());
    for (std::size_t k = 0; k < a.stats.size(); ++k) {
        const auto &x = a.stats[k], &y = b.stats[k];
        e.stats[k] = {(1 - theta) * x.w0 + theta * y.w0, (1 - theta) * x.wmean + theta * y.wmean,
                      (1 - theta) * x.mean + theta * y.mean, (1 - theta) * x.wsecond + theta * y.wsecond};
    }
    return e;
}

constexpr int kMaxSubsteps = 10000;

// B(z) = z / (e^z - 1), the Scharfetter-Gummel weight. The face flux
// D/dx (B(-Pe) p_j - B(Pe) p_{j+1}) is centered for small Peclet numbers and
// tends to donor-cell upwinding for large ones; both weights stay positive.
double bernoulli(double z)
{
    if (std::abs(z) < 1e-4) return 1.0 - 0.5 * z + z * z / 12.0;
    return z / std::expm1(z);
}

FPResult fp_core(const FeedbackControl& feedback, const ModelSpec& model, const LabelCoupling& coupling,
                 std::span<const double> initial, const DensityFlow* env, const FPOptions& options)
{
    const Grids& g = feedback.grids();
    g.validate();
    if (coupling.labels() != g.labels) throw ContractError("label coupling does not match the feedback's label grid");
    require_scalar_control(model);
    feedback.validate(model.control_set);
    check_initial(g, initial);
    if (env && !env->grids.same_as(g)) throw ContractError("environment flow lives on different grids");
    if (!(options.substep_multiplier >= 1.0)) throw ContractError("substep multiplier must be >= 1");

    const int nt = g.nt, nx = g.nx, K = g.labels;
    const double dt = g.dt(), dx = g.dx();
    const auto xs = g.xs();
    const int threads = effective_threads(options.threads);
    const auto unx = static_cast<std::size_t>(nx);

    FPResult res;
    res.flow = DensityFlow(g);
    for (int k = 0; k < K; ++k) std::copy(initial.begin(), initial.end(), res.flow.row(0, k).begin());

    std::vector<EnvSnapshot> frozen;
    if (env) {
        frozen.resize(static_cast<std::size_t>(nt + 1));
        for (int i = 0; i <= nt; ++i) frozen[static_cast<std::size_t>(i)] = environment(coupling, g, env->slice(i));
    }

    std::vector<double> cur(res.flow.slice(0).begin(), res.flow.slice(0).end());
    std::vector<double> b(cur.size()), diff(unx);
    std::vector<long> clipped(static_cast<std::size_t>(K), 0);

    for (int i = 0; i < nt; ++i) {
        double elapsed = 0.0;
        int steps_done = 0;
        int planned = 0;
        double h = 0.0;
        while (true) {
            const double ts = g.t(i) + elapsed;
            EnvSnapshot e = env ? blend(frozen[static_cast<std::size_t>(i)], frozen[static_cast<std::size_t>(i + 1)],
                                        elapsed / dt)
                                : environment(coupling, g, cur);
            double bmax = 0.0, s2max = 0.0;
            for (int j = 0; j < nx; ++j) {
                double s = model.sigma(ts, xs[static_cast<std::size_t>(j)]);
                diff[static_cast<std::size_t>(j)] = 0.5 * s * s;
                s2max = std::max(s2max, s * s);
            }
            for (int k = 0; k < K; ++k) {
                const EnvStats& st = e.stats[static_cast<std::size_t>(k)];
                for (int j = 0; j < nx; ++j) {
                    std::size_t n = static_cast<std::size_t>(k) * unx + static_cast<std::size_t>(j);
                    double v = drift_at(model, feedback, feedback.strict.index(i, k, j), ts,
                                        xs[static_cast<std::size_t>(j)], e.pbar[n], st);
                    if (!std::isfinite(v)) throw NumericalError("non-finite drift in the forward pass");
                    b[n] = v;
                    bmax = std::max(bmax, std::abs(v));
                }
            }
            double denom = bmax / dx + s2max / (dx * dx);
            double h_max = denom > 0.0 ? 0.4 / denom / options.substep_multiplier : dt;
            double remaining = dt - elapsed;
            if (planned == 0 || h > h_max * (1 + 1e-12)) {
                int n_rem = static_cast<int>(std::ceil(remaining / h_max - 1e-9));
                n_rem = std::max(n_rem, 1);
                h = remaining / n_rem;
                planned = steps_done + n_rem;
            }
            if (planned > kMaxSubsteps) {
                std::ostringstream os;
                os << "forward pass needs more than " << kMaxSubsteps << " sub-steps in [" << g.t(i) << ", "
                   << g.t(i + 1) << "] (|b|max = " << bmax << ")";
                throw NumericalError(os.str());
            }

            parallel_for(static_cast<std::size_t>(K), threads, [&](std::size_t lo, std::size_t hi) {
                std::vector<double> flux(unx + 1, 0.0);
                for (std::size_t kk = lo; kk < hi; ++kk) {
                    double* p = cur.data() + kk * unx;
                    const double* bk = b.data() + kk * unx;
                    flux[0] = 0.0;
                    flux[unx] = 0.0;
                    for (std::size_t f = 0; f + 1 < unx; ++f) {
                        double bf = 0.5 * (bk[f] + bk[f + 1]);
                        double df = 0.5 * (diff[f] + diff[f + 1]);
                        if (df > 0.0) {
                            const double pe = bf * dx / df;
                            flux[f + 1] = df / dx * (bernoulli(-pe) * p[f] - bernoulli(pe) * p[f + 1]);
                        } else {
                            flux[f + 1] = std::max(bf, 0.0) * p[f] + std::min(bf, 0.0) * p[f + 1];
                        }
                    }
                    const double r = h / dx;
                    for (std::size_t j = 0; j < unx; ++j) {
                        double v = p[j] - r * (flux[j + 1] - flux[j]);
                        if (v < 0.0) {
                            if (v < -1e-12 || !std::isfinite(v)) {
                                std::ostringstream os;
                                os << "forward scheme produced a negative density " << v << " (label " << kk
                                   << ", cell " << j << ")";
                                throw NumericalError(os.str());
                            }
                            v = 0.0;
                            ++clipped[kk];
                        } else if (!std::isfinite(v)) {
                            throw NumericalError("forward scheme produced a non-finite density");
                        }
                        p[j] = v;
                    }
                }
            });
            ++steps_done;
            elapsed = (steps_done == planned) ? dt : elapsed + h;
            if (steps_done == planned) break;
        }
        res.max_substeps = std::max(res.max_substeps, steps_done);
        std::copy(cur.begin(), cur.end(), res.flow.slice(i + 1).begin());
    }
    for (long c : clipped) res.clipped += c;
    return res;
}

} // namespace

FPResult fp_forward(const FeedbackControl& feedback, const ModelSpec& model, const LabelCoupling& coupling,
                    std::span<const double> initial, const FPOptions& options)
{
    return fp_core(feedback, model, coupling, initial, nullptr, options);
}

FPResult fp_forward_frozen(const FeedbackControl& feedback, const ModelSpec& model, const LabelCoupling& coupling,
                           std::span<const double> initial, const DensityFlow& env, const FPOptions& options)
{
    return fp_core(feedback, model, coupling, initial, &env, options);
}

// ---------------------------------------------------------------------------
// Payoff and best response

PayoffResult payoff_of_flow(const DensityFlow& env, const DensityFlow& own, const FeedbackControl& control,
                            const ModelSpec& model, const LabelCoupling& coupling)
{
    const Grids& g = env.grids;
    if (!own.grids.same_as(g) || !control.grids().same_as(g)) throw ContractError("payoff inputs live on different grids");
    const int nt = g.nt, nx = g.nx, K = g.labels;
    const double dt = g.dt(), dx = g.dx();
    const auto xs = g.xs();
    PayoffResult r;
    r.per_label.assign(static_cast<std::size_t>(K), 0.0);
    for (int i = 0; i <= nt; ++i) {
        EnvSnapshot e = environment(coupling, g, env.slice(i));
        const double t = g.t(i);
        for (int k = 0; k < K; ++k) {
            const EnvStats& st = e.stats[static_cast<std::size_t>(k)];
            auto q = own.row(i, k);
            double s = 0.0;
            for (int j = 0; j < nx; ++j) {
                const auto uj = static_cast<std::size_t>(j);
                if (q[uj] == 0.0) continue;
                double x = xs[uj];
                if (i == nt) {
                    s += model.terminal(x, st) * q[uj] * dx;
                } else {
                    double p = e.pbar[static_cast<std::size_t>(k) * static_cast<std::size_t>(nx) + uj];
                    s += dt * running_at(model, control, control.strict.index(i, k, j), t, x, p, st) * q[uj] * dx;
                }
            }
            r.per_label[static_cast<std::size_t>(k)] += s;
        }
    }
    for (double v : r.per_label) r.value += v / K;
    return r;
}

PayoffResult payoff(const DensityFlow& env, const FeedbackControl& control, const ModelSpec& model,
                    const LabelCoupling& coupling, std::span<const double> initial, const FPOptions& options)
{
    FPResult own = fp_forward_frozen(control, model, coupling, initial, env, options);
    PayoffResult r = payoff_of_flow(env, own.flow, control, model, coupling);
    r.own_flow = std::move(own.flow);
    return r;
}

FeedbackControl feedback_from_gradient(const DensityFlow& env, const GradientField& v, const ModelSpec& model,
                                       const LabelCoupling& coupling)
{
    const Grids& g = env.grids;
    if (!v.grids.same_as(g)) throw ContractError("gradient and environment live on different grids");
    require_scalar_control(model);
    const auto xs = g.xs();
    FeedbackControl fb;
    fb.strict = LabelField(g);
    for (int i = 0; i <= g.nt; ++i) {
        EnvSnapshot e = environment(coupling, g, env.slice(i));
        for (int k = 0; k < g.labels; ++k)
            for (int j = 0; j < g.nx; ++j) {
                double p = e.pbar[static_cast<std::size_t>(k) * static_cast<std::size_t>(g.nx) + static_cast<std::size_t>(j)];
                fb.strict.at(i, k, j) = maximize_h(model, g.t(i), xs[static_cast<std::size_t>(j)], p,
                                                   e.stats[static_cast<std::size_t>(k)], v.at(i, k, j))
                                            .maximizer[0];
            }
    }
    return fb;
}

BestResponse best_response(const DensityFlow& env, const ModelSpec& model, const LabelCoupling& coupling,
                           std::span<const double> initial, const FKOptions& fk, const FPOptions& fp)
{
    BestResponse br;
    FKResult back = fk_backward(env, model, coupling, fk);
    br.flagged = back.flagged;
    br.gradient = std::move(back.v);
    br.feedback = feedback_from_gradient(env, br.gradient, model, coupling);
    PayoffResult pay = payoff(env, br.feedback, model, coupling, initial, fp);
    br.value = pay.value;
    br.own_flow = std::move(pay.own_flow);
    return br;
}

// ---------------------------------------------------------------------------
// Fixed point

double flow_l1_distance(const DensityFlow& a, const DensityFlow& b)
{
    if (!a.grids.same_as(b.grids)) throw ContractError("flows live on different grids");
    const Grids& g = a.grids;
    double worst = 0.0;
    for (int i = 0; i <= g.nt; ++i) {
        auto sa = a.slice(i), sb = b.slice(i);
        double s = 0.0;
        for (std::size_t n = 0; n < sa.size(); ++n) s += std::abs(sa[n] - sb[n]);
        worst = std::max(worst, s * g.dx() / g.labels);
    }
    return worst;
}

namespace {

double sup_distance(const LabelField& a, const LabelField& b)
{
    double worst = 0.0;
    for (std::size_t n = 0; n < a.data.size(); ++n) worst = std::max(worst, std::abs(a.data[n] - b.data[n]));
    return worst;
}

std::vector<double> shifted_guess(const Grids& g, std::span<const double> nu, double shift)
{
    if (shift == 0.0) return {nu.begin(), nu.end()};
    std::vector<double> out(static_cast<std::size_t>(g.nx), 0.0);
    const double dx = g.dx();
    double mass = 0.0;
    for (int j = 0; j < g.nx; ++j) {
        double s = (g.x(j) - shift - g.x(0)) / dx;
        if (s < 0.0 || s > g.nx - 1) continue;
        auto a = static_cast<std::size_t>(std::min(static_cast<double>(g.nx - 2), std::floor(s)));
        double f = s - static_cast<double>(a);
        double v = (1 - f) * nu[a] + f * nu[a + 1];
        out[static_cast<std::size_t>(j)] = v;
        mass += v * dx;
    }
    if (!(mass > 0.0)) throw ContractError("guess shift moves the initial law off the grid");
    for (double& v : out) v /= mass;
    return out;
}

double boundary_mass(const DensityFlow& f)
{
    const Grids& g = f.grids;
    double worst = 0.0;
    for (int i = 0; i <= g.nt; ++i)
        for (int k = 0; k < g.labels; ++k) {
            auto r = f.row(i, k);
            worst = std::max({worst, r.front() * g.dx(), r.back() * g.dx()});
        }
    return worst;
}

} // namespace

MFGSolution mfg_fixed_point(const ModelSpec& model, const Graphon& graphon, const Grids& grids,
                            std::span<const double> initial, const SolverOptions& options)
{
    grids.validate();
    if (model.common_sigma != 0.0)
        throw ContractError("the deterministic fixed point needs common_sigma == 0; use the common-noise solver");
    if (!(options.damping > 0.0 && options.damping <= 1.0)) throw ContractError("damping must lie in (0, 1]");
    if (!(options.tol_v > 0.0) || !(options.tol_m > 0.0)) throw ContractError("tolerances must be positive");
    if (options.max_iter < 1) throw ContractError("max_iter must be >= 1");
    check_initial(grids, initial);

    LabelCoupling coupling(graphon, grids.labels);
    MFGSolution sol;
    sol.grids = grids;
    sol.initial.assign(initial.begin(), initial.end());

    DensityFlow m = constant_flow(grids, shifted_guess(grids, initial, options.guess_shift));
    GradientField v_prev;
    bool have_prev = false;

    double best_score = std::numeric_limits<double>::infinity();
    DensityFlow best_m;
    GradientField best_v;
    FeedbackControl best_fb;

    const double lambda0 = options.damping;
    bool decaying = false;
    int decay_start = 0;
    int detections = 0;
    int increases = 0;
    double last_r = std::numeric_limits<double>::infinity();
    double lambda = lambda0;

    for (int it = 1; it <= options.max_iter; ++it) {
        FKResult back = fk_backward(m, model, coupling, options.fk);
        sol.flagged = sol.flagged || back.flagged;
        FeedbackControl fb = feedback_from_gradient(m, back.v, model, coupling);
        FPResult fwd = fp_forward(fb, model, coupling, initial, options.fp);

        double r_m = flow_l1_distance(fwd.flow, m);
        double r_v = have_prev ? sup_distance(back.v, v_prev) : std::numeric_limits<double>::infinity();
        sol.history.push_back({it, r_v, r_m, lambda});
        sol.iterations = it;

        double score = std::max(r_m / options.tol_m, r_v / options.tol_v);
        bool done = r_m <= options.tol_m && r_v <= options.tol_v;
        if (score <= best_score || done) {
            best_score = score;
            best_m = m;
            best_v = back.v;
            best_fb = fb;
        }
        if (done) {
            sol.converged = true;
            break;
        }

        if (r_m > last_r) {
            ++increases;
        } else {
            increases = 0;
        }
        last_r = r_m;
        if (increases >= 5) {
            increases = 0;
            ++detections;
            if (detections >= 2) {
                std::ostringstream os;
                os << "fixed point oscillates (density residual rose 5 iterations in a row twice, last damping "
                   << lambda << ")";
                throw OscillationError(os.str(), 0.5 * lambda);
            }
            decaying = true;
            decay_start = it;
        }
        lambda = decaying ? lambda0 / (1.0 + (it - decay_start) / 20.0) : lambda0;

        for (std::size_t n = 0; n < m.data.size(); ++n) m.data[n] = (1 - lambda) * m.data[n] + lambda * fwd.flow.data[n];
        v_prev = std::move(back.v);
        have_prev = true;
    }

    sol.flow = std::move(best_m);
    sol.gradient = std::move(best_v);
    sol.feedback = std::move(best_fb);
    sol.payoff = payoff(sol.flow, sol.feedback, model, coupling, initial, options.fp).value;
    sol.boundary_mass = boundary_mass(sol.flow);
    return sol;
}

MFGSolution mfg_fixed_point_stepgraphon(const ModelSpec& model, const StepGraphon& step, Grids grids,
                                        std::span<const double> initial, const SolverOptions& options)
{
    grids.labels = step.k();
    return mfg_fixed_point(model, Graphon(step, "step"), grids, initial, options);
}

// ---------------------------------------------------------------------------
// Common noise

DensityFlow shift_flow(const DensityFlow& flow, std::span<const double> c)
{
    const Grids& g = flow.grids;
    if (c.size() != static_cast<std::size_t>(g.nt + 1)) throw ContractError("path must have one value per time point");
    DensityFlow out(g);
    const double dx = g.dx();
    const double cmin = std::min(0.0, *std::min_element(c.begin(), c.end()));
    const double cmax = std::max(0.0, *std::max_element(c.begin(), c.end()));
    for (int i = 0; i <= g.nt; ++i) {
        const double ci = c[static_cast<std::size_t>(i)];
        for (int k = 0; k < g.labels; ++k) {
            auto in = flow.row(i, k);
            auto dst = out.row(i, k);
            double lost = 0.0;
            for (int j = 0; j < g.nx; ++j) {
                double y = g.x(j) + ci;
                if (y < g.x_lo || y > g.x_hi) lost += in[static_cast<std::size_t>(j)] * dx;
            }
            if (lost > 1e-6) {
                std::ostringstream os;
                os << "common-noise shift by " << ci << " at t = " << g.t(i) << " pushes mass " << lost
                   << " outside [" << g.x_lo << ", " << g.x_hi << "]";
                throw DomainError(os.str(), g.x_lo + cmin, g.x_hi + cmax);
            }
            for (int j = 0; j < g.nx; ++j) {
                double s = static_cast<double>(j) - ci / dx;
                if (s < 0.0 || s > g.nx - 1) {
                    dst[static_cast<std::size_t>(j)] = 0.0;
                    continue;
                }
                auto a = static_cast<std::size_t>(std::min(static_cast<double>(g.nx - 2), std::floor(s)));
                double f = s - static_cast<double>(a);
                dst[static_cast<std::size_t>(j)] = f == 0.0 ? in[a] : (1 - f) * in[a] + f * in[a + 1];
            }
        }
    }
    return out;
}

std::vector<double> sample_common_path(const Grids& grids, double common_sigma, std::uint64_t seed,
                                       std::uint64_t path_id)
{
    NoiseStream stream(seed, 0xC0440000ull + path_id);
    std::vector<double> c(static_cast<std::size_t>(grids.nt + 1), 0.0);
    const double sd = common_sigma * std::sqrt(grids.dt());
    for (int i = 0; i < grids.nt; ++i)
        c[static_cast<std::size_t>(i + 1)] = c[static_cast<std::size_t>(i)] + sd * stream.normal(static_cast<std::uint64_t>(i), 0);
    return c;
}

CommonNoiseSolution common_noise_solve(const ModelSpec& model, const Graphon& graphon, const Grids& grids,
                                       std::span<const double> path, std::span<const double> initial,
                                       const SolverOptions& options)
{
    grids.validate();
    if (model.common_sigma == 0.0) throw ContractError("common-noise solve needs common_sigma != 0");
    if (path.size() != static_cast<std::size_t>(grids.nt + 1)) throw ContractError("path must have nt + 1 values");
    if (path.front() != 0.0) throw ContractError("common path must start at 0");

    ModelSpec translated = translate_model(model, {path.begin(), path.end()}, grids.dt());
    CommonNoiseSolution out;
    out.frozen = mfg_fixed_point(translated, graphon, grids, initial, options);
    out.translated = shift_flow(out.frozen.flow, path);

    std::vector<double> back(path.begin(), path.end());
    for (double& c : back) c = -c;
    DensityFlow recovered = shift_flow(out.translated, back);
    out.audit_error = sup_distance(recovered, out.frozen.flow);

    const Grids& g = grids;
    double slope = 0.0;
    for (int i = 0; i <= g.nt; ++i)
        for (int k = 0; k < g.labels; ++k) {
            auto r = out.frozen.flow.row(i, k);
            for (std::size_t j = 0; j + 1 < r.size(); ++j) slope = std::max(slope, std::abs(r[j + 1] - r[j]) / g.dx());
        }
    out.audit_bound = 2.0 * g.dx() * slope;
    return out;
}

} // namespace gmfg
