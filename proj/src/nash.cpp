#include "gmfg/nash.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "gmfg/error.hpp"

namespace gmfg {

int label_cell(int i, int n, int K)
{
    double u = static_cast<double>(i + 1) / n;
    int c = static_cast<int>(std::ceil(u * K - 1e-9)) - 1;
    return std::clamp(c, 0, K - 1);
}

Profile construct_profile(const MFGSolution& solution, int n, const ControlSet& box, double shift)
{
    if (n < 1) throw ContractError("profile needs n >= 1");
    const int K = solution.grids.labels;
    std::vector<std::shared_ptr<const FeedbackTable>> tables(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) tables[static_cast<std::size_t>(k)] = std::make_shared<const FeedbackTable>(solution.feedback, k);
    Profile p;
    p.box = box;
    p.rules.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto table = tables[static_cast<std::size_t>(label_cell(i, n, K))];
        if (shift == 0.0)
            p.rules.emplace_back([table](double t, double x) { return (*table)(t, x); });
        else
            p.rules.emplace_back([table, shift](double t, double x) { return (*table)(t, x) + shift; });
    }
    return p;
}

ExploitMethod parse_exploit_method(const std::string& name)
{
    if (name == "mean-field-BR" || name == "mean-field-br") return ExploitMethod::mean_field_br;
    if (name == "deviation-grid") return ExploitMethod::deviation_grid;
    throw CatalogError("unknown exploitability method '" + name + "' (expected mean-field-BR, deviation-grid)");
}

std::string exploit_method_name(ExploitMethod m)
{
    return m == ExploitMethod::mean_field_br ? "mean-field-BR" : "deviation-grid";
}

std::vector<int> deviator_indices(int n, int m)
{
    m = std::clamp(m, 1, n);
    std::vector<int> out(static_cast<std::size_t>(m));
    for (int s = 0; s < m; ++s)
        out[static_cast<std::size_t>(s)] = static_cast<int>(std::floor((s + 0.5) * n / m));
    return out;
}

namespace {

struct Variant {
    std::string name;
    double shift;
    double gain;
};

std::vector<Variant> deviation_family()
{
    std::vector<Variant> v;
    for (double s : {-0.4, -0.2, -0.1, -0.05, 0.05, 0.1, 0.2, 0.4}) {
        std::ostringstream os;
        os << "shift" << (s > 0 ? "+" : "") << s;
        v.push_back({os.str(), s, 1.0});
    }
    for (double g : {0.5, 0.75, 0.9, 0.95, 1.05, 1.1, 1.25, 1.5}) {
        std::ostringstream os;
        os << "gain" << g;
        v.push_back({os.str(), 0.0, g});
    }
    return v;
}

struct Gap {
    double mean = 0.0;
    double se = 0.0;
    double dev = 0.0;
};

Gap crn_gap(const std::vector<std::vector<double>>& base, const std::vector<std::vector<double>>& dev, int player)
{
    const std::size_t reps = base.size();
    const auto ip = static_cast<std::size_t>(player);
    Gap g;
    std::vector<double> d(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        d[r] = dev[r][ip] - base[r][ip];
        g.mean += d[r] / static_cast<double>(reps);
        g.dev += dev[r][ip] / static_cast<double>(reps);
    }
    if (reps > 1) {
        double ss = 0.0;
        for (double x : d) ss += (x - g.mean) * (x - g.mean);
        g.se = std::sqrt(ss / static_cast<double>(reps - 1) / static_cast<double>(reps));
    }
    return g;
}

} // namespace

ExploitabilityReport exploitability(const ModelSpec& model, const Graphon& graphon, const MFGSolution& solution,
                                    int n, ExploitMethod method, const ExploitabilityOptions& options)
{
    if (n < 2) throw ContractError("exploitability needs n >= 2");
    if (options.reps < 1) throw ContractError("exploitability needs reps >= 1");
    const Grids& g = solution.grids;

    SystemTemplate tmpl{sample_matrix(graphon, n), KernelSpec::scheduled(options.kernel, n, options.bandwidth_c),
                        std::make_shared<const InitialLaw>(g, solution.initial)};
    SimulationSpec sim = options.sim;
    Profile base = construct_profile(solution, n, model.control_set, options.profile_shift);
    auto base_J = payoff_samples(model, tmpl, base, options.reps, options.seed, sim);
    PayoffEstimate base_est = summarize_payoffs(base_J);

    ExploitabilityReport rep;
    rep.method = method;
    rep.n = n;
    rep.baseline = base_est.average;
    rep.baseline_se = base_est.average_se;

    const auto deviators = deviator_indices(n, options.deviators);
    std::vector<std::shared_ptr<const FeedbackTable>> br_tables;
    if (method == ExploitMethod::mean_field_br) {
        LabelCoupling coupling(graphon, g.labels);
        BestResponse br = best_response(solution.flow, model, coupling, solution.initial, options.fk, options.fp);
        for (int k = 0; k < g.labels; ++k) br_tables.push_back(std::make_shared<const FeedbackTable>(br.feedback, k));
    }
    const auto family = deviation_family();

    // per-rep averages of the gaps over deviators, for the standard error of the mean
    std::vector<double> rep_avg(static_cast<std::size_t>(options.reps), 0.0);
    for (int i : deviators) {
        PlayerDelta pd;
        pd.player = i;
        pd.label = static_cast<double>(i + 1) / n;
        pd.j_base = base_est.mean[static_cast<std::size_t>(i)];
        const auto own = base.rules[static_cast<std::size_t>(i)];
        if (method == ExploitMethod::mean_field_br) {
            Profile dev = base;
            auto table = br_tables[static_cast<std::size_t>(label_cell(i, n, g.labels))];
            dev.rules[static_cast<std::size_t>(i)] = [table](double t, double x) { return (*table)(t, x); };
            auto dev_J = payoff_samples(model, tmpl, dev, options.reps, options.seed, sim);
            Gap gap = crn_gap(base_J, dev_J, i);
            pd.delta = gap.mean;
            pd.se = gap.se;
            pd.j_dev = gap.dev;
            pd.variant = "best-response";
            for (int r = 0; r < options.reps; ++r)
                rep_avg[static_cast<std::size_t>(r)] +=
                    (dev_J[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] -
                     base_J[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)]) /
                    static_cast<double>(deviators.size());
        } else {
            bool first = true;
            std::vector<double> best_diff;
            for (const auto& v : family) {
                Profile dev = base;
                double s = v.shift, gn = v.gain;
                dev.rules[static_cast<std::size_t>(i)] = [own, s, gn](double t, double x) { return gn * own(t, x) + s; };
                auto dev_J = payoff_samples(model, tmpl, dev, options.reps, options.seed, sim);
                Gap gap = crn_gap(base_J, dev_J, i);
                if (first || gap.mean > pd.delta) {
                    first = false;
                    pd.delta = gap.mean;
                    pd.se = gap.se;
                    pd.j_dev = gap.dev;
                    pd.variant = v.name;
                    best_diff.assign(static_cast<std::size_t>(options.reps), 0.0);
                    for (int r = 0; r < options.reps; ++r)
                        best_diff[static_cast<std::size_t>(r)] =
                            dev_J[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] -
                            base_J[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)];
                }
            }
            for (int r = 0; r < options.reps; ++r)
                rep_avg[static_cast<std::size_t>(r)] += best_diff[static_cast<std::size_t>(r)] / static_cast<double>(deviators.size());
        }
        rep.players.push_back(pd);
    }
    for (const auto& pd : rep.players) rep.average += pd.delta / static_cast<double>(rep.players.size());
    if (options.reps > 1) {
        double mean = 0.0;
        for (double a : rep_avg) mean += a / options.reps;
        double ss = 0.0;
        for (double a : rep_avg) ss += (a - mean) * (a - mean);
        rep.average_se = std::sqrt(ss / (options.reps - 1) / options.reps);
    }
    return rep;
}

double monotonicity_value(const ModelSpec& model, const LabelCoupling& coupling, const DensityFlow& a,
                          const DensityFlow& b)
{
    if (!model.separated) throw ContractError("monotonicity check is not applicable: model '" + model.name +
                                              "' declares no separated form");
    if (!a.grids.same_as(b.grids)) throw ContractError("flow pair lives on different grids");
    const Grids& g = a.grids;
    const auto& coupling_fn = model.separated->coupling;
    const int K = g.labels, nx = g.nx;
    const double dx = g.dx(), dt = g.dt(), w = 1.0 / K;
    const auto xs = g.xs();
    double total = 0.0;
    for (int i = 0; i <= g.nt; ++i) {
        EnvSnapshot ea = environment(coupling, g, a.slice(i));
        EnvSnapshot eb = environment(coupling, g, b.slice(i));
        const double t = g.t(i);
        double layer = 0.0;
        for (int k = 0; k < K; ++k) {
            const EnvStats& sa = ea.stats[static_cast<std::size_t>(k)];
            const EnvStats& sb = eb.stats[static_cast<std::size_t>(k)];
            for (int j = 0; j < nx; ++j) {
                const auto n = static_cast<std::size_t>(k) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(j);
                const double x = xs[static_cast<std::size_t>(j)];
                const double dp = a.at(i, k, j) - b.at(i, k, j);
                if (dp == 0.0) continue;
                double diff = (i == g.nt) ? model.terminal(x, sa) - model.terminal(x, sb)
                                          : coupling_fn(t, x, ea.pbar[n], sa) - coupling_fn(t, x, eb.pbar[n], sb);
                layer += w * diff * dp * dx;
            }
        }
        total += (i == g.nt) ? layer : dt * layer;
    }
    return total;
}

DensityFlow randomized_flow(const ModelSpec& model, const LabelCoupling& coupling, const Grids& grids,
                            std::uint64_t seed, std::uint64_t id, const FPOptions& fp)
{
    NoiseStream rng(seed, id);
    std::uint32_t slot = 0;
    auto draw = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(0, slot++); };
    const double span = grids.x_hi - grids.x_lo;
    const double mid = 0.5 * (grids.x_lo + grids.x_hi);
    auto nu = gaussian_initial(grids, mid + draw(-0.1, 0.1) * span, draw(0.05, 0.12) * span);
    const ControlSet& box = model.control_set;
    const double reach = 0.5 * (box.upper(0) - box.lower(0));
    FeedbackControl fb;
    fb.strict = LabelField(grids);
    const auto xs = grids.xs();
    for (int k = 0; k < grids.labels; ++k) {
        const double a = draw(-0.5, 0.5) * reach, b = draw(-1.0, 1.0) * reach;
        const double c = mid + draw(-0.2, 0.2) * span, d = draw(-0.5, 0.5) * reach;
        for (int i = 0; i <= grids.nt; ++i)
            for (int j = 0; j < grids.nx; ++j) {
                double v = a + b * std::tanh(xs[static_cast<std::size_t>(j)] - c) + d * grids.t(i);
                fb.strict.at(i, k, j) = std::clamp(v, box.lower(0), box.upper(0));
            }
    }
    return fp_forward(fb, model, coupling, nu, fp).flow;
}

double monotonicity_check(const ModelSpec& model, const Graphon& graphon,
                          const std::vector<std::pair<DensityFlow, DensityFlow>>& pairs, std::vector<double>* values)
{
    if (!model.separated) throw ContractError("monotonicity check is not applicable: model '" + model.name +
                                              "' declares no separated form");
    if (pairs.empty()) throw ContractError("monotonicity check needs at least one pair");
    LabelCoupling coupling(graphon, pairs.front().first.grids.labels);
    double worst = -std::numeric_limits<double>::infinity();
    if (values) values->clear();
    for (const auto& [a, b] : pairs) {
        double v = monotonicity_value(model, coupling, a, b);
        if (values) values->push_back(v);
        worst = std::max(worst, v);
    }
    return worst;
}

} // namespace gmfg
