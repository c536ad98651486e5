#include "gmfg/commands.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "gmfg/io.hpp"
#include "gmfg/metrics.hpp"
#include "gmfg/parallel.hpp"
#include "gmfg/plot.hpp"

#ifndef GMFG_VERSION
#define GMFG_VERSION "0.1.0"
#endif

namespace gmfg {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string version_string() { return GMFG_VERSION; }

namespace {

void say(const CommandContext& ctx, const std::string& msg)
{
    if (ctx.log) *ctx.log << msg << '\n' << std::flush;
}

std::string utc_stamp()
{
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

/// A run directory with its metadata. The metadata is written on every exit
/// path so failed runs still record what was attempted.
class Run {
public:
    Run(const CommandContext& ctx, const std::string& command)
        : ctx_(ctx), start_(std::chrono::steady_clock::now())
    {
        const ExperimentConfig& cfg = ctx.config;
        dir_ = make_run_dir(ctx.out_dir, command, cfg.hash());
        meta_["command"] = command;
        meta_["version"] = version_string();
        meta_["config_hash"] = cfg.hash();
        meta_["config_path"] = ctx.config_path;
        meta_["config"] = ojson::parse(cfg.canonical_json());
        meta_["seeds"] = {{"master", cfg.simulation.seed}};
        meta_["threads"] = effective_threads(cfg.threads);
        meta_["created_utc"] = utc_stamp();
        if (!ctx.input_run.empty()) meta_["input_run"] = ctx.input_run;
        say(ctx, "run directory: " + dir_);
    }

    ~Run()
    {
        if (!closed_) {
            try {
                close("failed");
            } catch (...) {
            }
        }
    }

    const std::string& dir() const { return dir_; }
    ojson& meta() { return meta_; }
    std::string file(const std::string& name) const { return path_in(dir_, name); }

    void close(const std::string& status)
    {
        closed_ = true;
        meta_["status"] = status;
        meta_["wall_time_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_json(file("meta.json"), meta_);
    }

    void fail(const std::string& message)
    {
        meta_["error"] = message;
        close("failed");
    }

private:
    const CommandContext& ctx_;
    std::chrono::steady_clock::time_point start_;
    std::string dir_;
    ojson meta_;
    bool closed_ = false;
};

// Wraps a command body so that errors are recorded in meta.json before they propagate.
template <class Body>
CommandResult run_with(const CommandContext& ctx, const std::string& command, Body&& body)
{
    Run run(ctx, command);
    try {
        CommandResult res = body(run);
        res.run_dir = run.dir();
        return res;
    } catch (const std::exception& e) {
        run.fail(e.what());
        throw;
    }
}

ModelSpec deterministic_part(const ModelSpec& model)
{
    ModelSpec m = model;
    m.common_sigma = 0.0;
    return m;
}

double sup_difference(const DensityFlow& a, const DensityFlow& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s = std::max(s, std::abs(a.data[i] - b.data[i]));
    return s;
}

void plot_residuals(const std::string& path, const MFGSolution& sol)
{
    PlotSeries g{"gradient", {}, {}}, m{"density", {}, {}};
    for (const auto& r : sol.history) {
        g.x.push_back(r.iteration);
        g.y.push_back(r.gradient);
        m.x.push_back(r.iteration);
        m.y.push_back(r.density);
    }
    write_svg(path, {"Fixed-point residuals", "iteration", "residual", false, true}, {g, m});
}

void plot_density_snapshots(const std::string& path, const DensityFlow& flow)
{
    const Grids& g = flow.grids;
    const auto xs = g.xs();
    std::vector<PlotSeries> series;
    std::vector<int> labels{0};
    if (g.labels > 1) labels.push_back(g.labels - 1);
    for (int i : {0, g.nt / 2, g.nt})
        for (int k : labels) {
            std::ostringstream name;
            name << "t=" << g.t(i) << " u=" << g.label(k);
            auto row = flow.row(i, k);
            series.push_back({name.str(), xs, {row.begin(), row.end()}});
        }
    write_svg(path, {"Density snapshots", "x", "p(t, x, u)"}, series);
}

/// The MFG solution a downstream command works with: read from --run, or
/// solved afresh (artifacts then go into this run directory as well).
MFGSolution obtain_solution(const CommandContext& ctx, Run& run)
{
    const ExperimentConfig& cfg = ctx.config;
    MFGSolution sol;
    if (!ctx.input_run.empty()) {
        sol = read_solution(ctx.input_run);
        if (!sol.grids.same_as(cfg.grids))
            say(ctx, "note: using the grids stored in " + ctx.input_run + " (they differ from the config)");
        say(ctx, "loaded solution from " + ctx.input_run);
    } else {
        say(ctx, "solving the mean-field game");
        ModelSpec model = deterministic_part(cfg.build_model());
        sol = mfg_fixed_point(model, cfg.build_graphon(), cfg.grids, cfg.build_initial(), cfg.solver_options());
        write_solution(run.dir(), sol);
    }
    run.meta()["solution"] = solution_summary(sol);
    if (!sol.converged) say(ctx, "warning: the solution did not converge");
    return sol;
}

SystemTemplate system_template(const ExperimentConfig& cfg, const Graphon& graphon, const MFGSolution& sol, int n)
{
    return {sample_matrix(graphon, n), KernelSpec::scheduled(cfg.kernel.family, n, cfg.kernel.bandwidth_c),
            std::make_shared<const InitialLaw>(sol.grids, sol.initial)};
}

SimulationSpec simulation_for(const ExperimentConfig& cfg, const MFGSolution& sol)
{
    SimulationSpec s = cfg.simulation_spec();
    s.T = sol.grids.T;
    return s;
}

ExploitabilityOptions exploit_options(const ExperimentConfig& cfg, const MFGSolution& sol)
{
    ExploitabilityOptions o;
    o.reps = cfg.simulation.reps;
    o.deviators = cfg.nash.deviators;
    o.seed = cfg.simulation.seed;
    o.kernel = cfg.kernel.family;
    o.bandwidth_c = cfg.kernel.bandwidth_c;
    o.profile_shift = cfg.nash.profile_shift;
    o.sim = simulation_for(cfg, sol);
    SolverOptions so = cfg.solver_options();
    o.fk = so.fk;
    o.fp = so.fp;
    return o;
}

std::vector<std::vector<std::string>> read_text_csv(const std::string& path, std::vector<std::string>& header)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read '" + path + "'");
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        return cells;
    };
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("'" + path + "' is empty");
    header = split(line);
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(split(line));
    return rows;
}

void plot_convergence(const std::string& dir, const ConvergenceTable& table)
{
    std::map<std::string, std::map<double, PlotSeries>> by_metric;
    for (const auto& r : table.records) {
        auto& s = by_metric[r.metric][r.t];
        if (s.label.empty()) {
            std::ostringstream os;
            os << r.metric << " t=" << r.t;
            s.label = os.str();
        }
        s.x.push_back(r.n);
        s.y.push_back(r.value);
    }
    std::vector<PlotSeries> all;
    const std::map<std::string, std::string> files{
        {"w1", "w1_vs_n.svg"}, {"payoff_gap", "payoff_gap_vs_n.svg"}, {"exploitability", "exploitability_vs_n.svg"}};
    for (const auto& [metric, series] : by_metric) {
        std::vector<PlotSeries> list;
        for (const auto& [t, s] : series) {
            list.push_back(s);
            all.push_back(s);
        }
        auto it = files.find(metric);
        std::string name = it != files.end() ? it->second : metric + "_vs_n.svg";
        write_svg(path_in(dir, name), {metric + " against n", "n", metric, true, false}, list);
    }
    write_svg(path_in(dir, "loglog.svg"), {"Convergence diagnostics (log-log)", "n", "value", true, true}, all);
}

} // namespace

std::string make_run_dir(const std::string& out_dir, const std::string& command, const std::string& hash)
{
    fs::create_directories(out_dir);
    const std::string base = command + "-" + utc_stamp() + "-" + hash.substr(0, 8);
    for (int attempt = 1;; ++attempt) {
        fs::path p = fs::path(out_dir) / (attempt == 1 ? base : base + "-" + std::to_string(attempt));
        if (fs::create_directory(p)) return p.string();
        if (attempt > 10000) throw Error("cannot create a fresh run directory under '" + out_dir + "'");
    }
}

bool translation_invariant(const ModelSpec& model)
{
    const EnvStats r{0.8, 0.1, 0.2, 1.5};
    const ControlVec a(0.4);
    auto close = [](double u, double v) { return std::abs(u - v) <= 1e-10 * (1.0 + std::abs(u) + std::abs(v)); };
    for (double t : {0.0, 0.37})
        for (double x : {-1.3, 0.2, 1.7})
            for (double c : {0.7, -1.1}) {
                const EnvStats rc = r.shifted(c);
                if (!close(model.drift(t, x, 0.3, r, a), model.drift(t, x + c, 0.3, rc, a))) return false;
                if (!close(model.running(t, x, 0.3, r, a), model.running(t, x + c, 0.3, rc, a))) return false;
                if (!close(model.terminal(x, r), model.terminal(x + c, rc))) return false;
                if (!close(model.sigma(t, x), model.sigma(t, x + c))) return false;
            }
    return true;
}

CommandResult cmd_solve(const CommandContext& ctx)
{
    return run_with(ctx, "solve", [&](Run& run) {
        const ExperimentConfig& cfg = ctx.config;
        const ModelSpec model = cfg.build_model();
        const Graphon graphon = cfg.build_graphon();
        const auto initial = cfg.build_initial();
        const SolverOptions opts = cfg.solver_options();

        say(ctx, "solving " + model.name + " on graphon " + graphon.name());
        MFGSolution sol = mfg_fixed_point(deterministic_part(model), graphon, cfg.grids, initial, opts);
        write_solution(run.dir(), sol);
        run.meta()["solution"] = solution_summary(sol);
        {
            std::ostringstream os;
            os << (sol.converged ? "converged" : "did not converge") << " after " << sol.iterations
               << " iterations, J = " << format_double(sol.payoff);
            say(ctx, os.str());
        }
        if (sol.flagged)
            say(ctx, "warning: more than 1% of the quadrature mass fell outside the state domain; consider widening it");
        if (cfg.output.plots) {
            plot_residuals(run.file("residuals.svg"), sol);
            plot_density_snapshots(run.file("density.svg"), sol.flow);
        }

        CommandResult res;
        res.code = sol.converged ? ExitCode::ok : ExitCode::non_convergence;
        res.message = sol.converged ? "converged" : "not converged";

        if (model.common_sigma != 0.0) {
            const bool invariant = translation_invariant(model);
            say(ctx, std::string("common noise: auditing ") + std::to_string(cfg.common_noise.paths) +
                         " sampled paths" + (invariant ? "" : " (coefficients are not translation invariant)"));
            CsvWriter audit(run.file("common_noise.csv"), {"path_id", "c_T", "iterations", "converged", "audit_error",
                                                           "reference_error", "bound", "passed"});
            CsvWriter paths(run.file("common_paths.csv"), {"path_id", "t", "c"});
            CsvWriter terminal(run.file("common_noise_terminal.csv"), {"path_id", "u", "x", "p"});
            bool all_ok = true;
            double worst_ratio = 0.0;
            const Grids& g = cfg.grids;
            const auto xs = g.xs();
            for (int p = 0; p < cfg.common_noise.paths; ++p) {
                auto c = sample_common_path(g, model.common_sigma, cfg.simulation.seed, static_cast<std::uint64_t>(p));
                CommonNoiseSolution cn = common_noise_solve(model, graphon, g, c, initial, opts);
                double ref = std::numeric_limits<double>::quiet_NaN();
                if (invariant) ref = sup_difference(cn.translated, shift_flow(sol.flow, c));
                const double bound = cn.audit_bound;
                bool ok = cn.frozen.converged && cn.audit_error <= bound && (!invariant || ref <= bound);
                all_ok = all_ok && ok;
                worst_ratio = std::max(worst_ratio, std::max(cn.audit_error, invariant ? ref : 0.0) / bound);
                audit.integer(p).num(c.back()).integer(cn.frozen.iterations).integer(cn.frozen.converged ? 1 : 0);
                audit.num(cn.audit_error).num(ref).num(bound).integer(ok ? 1 : 0);
                audit.end_row();
                for (int i = 0; i <= g.nt; ++i) {
                    paths.integer(p).num(g.t(i)).num(c[static_cast<std::size_t>(i)]);
                    paths.end_row();
                }
                for (int k = 0; k < g.labels; ++k)
                    for (int j = 0; j < g.nx; ++j) {
                        terminal.integer(p).num(g.label(k)).num(xs[static_cast<std::size_t>(j)]);
                        terminal.num(cn.translated.at(g.nt, k, j));
                        terminal.end_row();
                    }
            }
            run.meta()["common_noise"] = {{"paths", cfg.common_noise.paths},
                                          {"translation_invariant", invariant},
                                          {"worst_error_to_bound", worst_ratio},
                                          {"passed", all_ok}};
            say(ctx, std::string("common-noise audit ") + (all_ok ? "passed" : "FAILED"));
            if (!all_ok && res.code == ExitCode::ok) {
                res.code = ExitCode::numerical_blowup;
                res.message = "common-noise audit failed";
            }
        }
        run.close(res.code == ExitCode::ok ? "ok" : res.message);
        return res;
    });
}

CommandResult cmd_simulate(const CommandContext& ctx)
{
    return run_with(ctx, "simulate", [&](Run& run) {
        const ExperimentConfig& cfg = ctx.config;
        const ModelSpec model = cfg.build_model();
        const Graphon graphon = cfg.build_graphon();
        MFGSolution sol = obtain_solution(ctx, run);
        const SimulationSpec spec = simulation_for(cfg, sol);

        CsvWriter summary(run.file("simulate.csv"), {"n", "epsilon", "J_avg", "J_avg_se", "J_mean_field"});
        for (int n : cfg.simulation.n) {
            say(ctx, "simulating n = " + std::to_string(n));
            const std::string sub = run.file("n" + std::to_string(n));
            fs::create_directories(sub);
            SystemTemplate tmpl = system_template(cfg, graphon, sol, n);
            Profile profile = construct_profile(sol, n, model.control_set);
            ParticleSystem sys = instantiate(tmpl, rep_seed(cfg.simulation.seed, 0));
            Trajectory traj = simulate(sys, profile, model, spec);
            write_empirical_flow(path_in(sub, "empirical_flow.csv"), traj);
            write_positions_binary(path_in(sub, "positions.bin"), traj);
            PayoffEstimate est = payoff_estimate(model, tmpl, profile, cfg.simulation.reps, cfg.simulation.seed, spec);
            write_payoffs(path_in(sub, "payoffs.csv"), est, traj.labels);
            summary.integer(n).num(tmpl.kernel.epsilon).num(est.average).num(est.average_se).num(sol.payoff);
            summary.end_row();
        }
        CommandResult res;
        res.code = sol.converged ? ExitCode::ok : ExitCode::non_convergence;
        res.message = sol.converged ? "ok" : "solution not converged";
        run.close(res.message);
        return res;
    });
}

CommandResult cmd_nash(const CommandContext& ctx)
{
    return run_with(ctx, "nash", [&](Run& run) {
        const ExperimentConfig& cfg = ctx.config;
        const ModelSpec model = cfg.build_model();
        const Graphon graphon = cfg.build_graphon();
        MFGSolution sol = obtain_solution(ctx, run);
        const ExploitabilityOptions opts = exploit_options(cfg, sol);

        std::vector<ExploitabilityReport> reports;
        CsvWriter summary(run.file("nash_summary.csv"),
                          {"n", "method", "average", "average_se", "baseline", "baseline_se", "relative"});
        for (int n : cfg.simulation.n) {
            say(ctx, "exploitability at n = " + std::to_string(n) + " (" + exploit_method_name(cfg.nash.method) + ")");
            ExploitabilityReport rep = exploitability(model, graphon, sol, n, cfg.nash.method, opts);
            summary.integer(n).text(exploit_method_name(rep.method)).num(rep.average).num(rep.average_se);
            summary.num(rep.baseline).num(rep.baseline_se).num(rep.average / std::abs(sol.payoff));
            summary.end_row();
            reports.push_back(std::move(rep));
        }
        write_exploitability(run.file("exploitability.csv"), reports);

        if (model.separated) {
            const int pairs = cfg.nash.monotonicity_pairs;
            say(ctx, "monotonicity check on " + std::to_string(pairs) + " random flow pairs");
            LabelCoupling coupling(graphon, sol.grids.labels);
            const FPOptions fp = cfg.solver_options().fp;
            std::vector<double> values;
            values.reserve(static_cast<std::size_t>(pairs));
            for (int p = 0; p < pairs; ++p) {
                const auto id = static_cast<std::uint64_t>(p);
                DensityFlow a = randomized_flow(model, coupling, sol.grids, cfg.simulation.seed, 0x4D4F0000ull + 2 * id, fp);
                DensityFlow b = randomized_flow(model, coupling, sol.grids, cfg.simulation.seed, 0x4D4F0001ull + 2 * id, fp);
                values.push_back(monotonicity_value(model, coupling, a, b));
            }
            write_monotonicity(run.file("monotonicity.csv"), values);
            double worst = *std::max_element(values.begin(), values.end());
            run.meta()["monotonicity"] = {{"pairs", pairs}, {"max", worst}, {"certified", worst <= 1e-10}};
        } else {
            run.meta()["monotonicity"] = {{"applicable", false},
                                          {"reason", "model '" + model.name + "' declares no separated form"}};
        }
        CommandResult res;
        res.code = sol.converged ? ExitCode::ok : ExitCode::non_convergence;
        res.message = sol.converged ? "ok" : "solution not converged";
        run.close(res.message);
        return res;
    });
}

CommandResult cmd_convergence(const CommandContext& ctx)
{
    const ExperimentConfig& cfg = ctx.config;
    if (cfg.simulation.n.size() < 3) throw ConfigError("convergence needs at least 3 values in simulation.n");
    return run_with(ctx, "convergence", [&](Run& run) {
        const ModelSpec model = cfg.build_model();
        const Graphon graphon = cfg.build_graphon();
        MFGSolution sol = obtain_solution(ctx, run);
        const SimulationSpec spec = simulation_for(cfg, sol);
        const int reps = cfg.simulation.reps;

        std::vector<ConvergenceRecord> records;
        CsvWriter detail(run.file("convergence_detail.csv"), {"n", "t", "metric", "value", "se"});
        auto add = [&](int n, double t, const std::string& metric, double value, double se) {
            records.push_back({n, t, metric, value});
            detail.integer(n).num(t).text(metric).num(value).num(se);
            detail.end_row();
        };
        for (int n : cfg.simulation.n) {
            say(ctx, "convergence sweep: n = " + std::to_string(n));
            SystemTemplate tmpl = system_template(cfg, graphon, sol, n);
            Profile profile = construct_profile(sol, n, model.control_set);
            const std::size_t nt = cfg.simulation.record_times.size();
            std::vector<std::vector<double>> w1(nt, std::vector<double>(static_cast<std::size_t>(reps)));
            std::vector<double> avgJ(static_cast<std::size_t>(reps));
            for (int r = 0; r < reps; ++r) {
                ParticleSystem sys = instantiate(tmpl, rep_seed(cfg.simulation.seed, r));
                Trajectory traj = simulate(sys, profile, model, spec);
                for (std::size_t q = 0; q < nt; ++q) {
                    const double t = cfg.simulation.record_times[q];
                    std::size_t rec = 0;
                    while (rec + 1 < traj.times.size() && std::abs(traj.times[rec] - t) > 1e-9) ++rec;
                    const int ti = static_cast<int>(std::lround(t / sol.grids.dt()));
                    w1[q][static_cast<std::size_t>(r)] =
                        label_resolved_w1(traj.positions[rec], traj.labels, sol.flow, ti).value;
                }
                double s = 0.0;
                for (int i = 0; i < n; ++i)
                    s += traj.running[static_cast<std::size_t>(i)] + traj.terminal[static_cast<std::size_t>(i)];
                avgJ[static_cast<std::size_t>(r)] = s / n;
            }
            auto mean_se = [](const std::vector<double>& v) {
                double m = 0.0;
                for (double x : v) m += x / static_cast<double>(v.size());
                double ss = 0.0;
                for (double x : v) ss += (x - m) * (x - m);
                double se = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
                return std::pair<double, double>{m, se};
            };
            for (std::size_t q = 0; q < nt; ++q) {
                auto [m, se] = mean_se(w1[q]);
                add(n, cfg.simulation.record_times[q], "w1", m, se);
            }
            auto [jm, jse] = mean_se(avgJ);
            add(n, sol.grids.T, "payoff_gap", std::abs(jm - sol.payoff), jse);
            if (cfg.nash.exploitability_in_convergence) {
                ExploitabilityReport rep =
                    exploitability(model, graphon, sol, n, cfg.nash.method, exploit_options(cfg, sol));
                add(n, sol.grids.T, "exploitability", rep.average, rep.average_se);
            }
        }
        ConvergenceTable table = convergence_table(records);
        write_convergence(run.dir(), table);
        if (cfg.output.plots) plot_convergence(run.dir(), table);
        CommandResult res;
        res.code = sol.converged ? ExitCode::ok : ExitCode::non_convergence;
        res.message = sol.converged ? "ok" : "solution not converged";
        run.close(res.message);
        return res;
    });
}

CommandResult cmd_graphon_study(const CommandContext& ctx)
{
    return run_with(ctx, "graphon-study", [&](Run& run) {
        const ExperimentConfig& cfg = ctx.config;
        const ModelSpec model = deterministic_part(cfg.build_model());
        const Graphon graphon = cfg.build_graphon();
        const auto initial = cfg.build_initial();
        const SolverOptions opts = cfg.solver_options();
        const int R = cfg.study.reference_labels;

        say(ctx, "reference solve with " + std::to_string(R) + " labels");
        const StepGraphon ref_step = step_approximation(graphon, R);
        MFGSolution ref = mfg_fixed_point_stepgraphon(model, ref_step, cfg.grids, initial, opts);
        bool all_converged = ref.converged;
        run.meta()["reference"] = solution_summary(ref);

        CsvWriter out(run.file("graphon_study.csv"), {"k", "cut_metric", "cut_attained_by", "cut_to_reference",
                                                      "solution_l1", "converged", "iterations", "payoff"});
        PlotSeries cut{"cut metric", {}, {}}, dist{"solution L1 to reference", {}, {}};
        for (int k : cfg.study.k) {
            say(ctx, "step approximation k = " + std::to_string(k));
            const StepGraphon step = step_approximation(graphon, k);
            MFGSolution sk = mfg_fixed_point_stepgraphon(model, step, cfg.grids, initial, opts);
            all_converged = all_converged && sk.converged;
            const double l1 = label_mapped_l1(sk.flow, ref.flow);
            const CutMetric cm = cut_convergence_metric(step, graphon);
            StepKernel diff = difference_kernel(step, ref_step, [](double e) { return e; });
            const double to_ref =
                cut_norm(diff, std::max(diff.rows(), diff.cols()) <= 12 ? CutMode::exact : CutMode::heuristic);
            out.integer(k).num(cm.value).text(cm.attained_by).num(to_ref).num(l1);
            out.integer(sk.converged ? 1 : 0).integer(sk.iterations).num(sk.payoff);
            out.end_row();
            cut.x.push_back(k);
            cut.y.push_back(cm.value);
            dist.x.push_back(k);
            dist.y.push_back(l1);
        }
        if (cfg.output.plots)
            write_svg(run.file("graphon_study.svg"), {"Step-graphon approximation", "k", "distance", true, true},
                      {cut, dist});
        CommandResult res;
        res.code = all_converged ? ExitCode::ok : ExitCode::non_convergence;
        res.message = all_converged ? "ok" : "some solves did not converge";
        run.close(res.message);
        return res;
    });
}

CommandResult cmd_report(const CommandContext& ctx)
{
    if (ctx.input_run.empty()) throw ConfigError("report needs --run <directory>");
    const std::string src = ctx.input_run;
    if (!fs::exists(path_in(src, "meta.json"))) throw ConfigError("'" + src + "' has no meta.json");
    return run_with(ctx, "report", [&](Run& run) {
        nlohmann::json meta = read_json(path_in(src, "meta.json"));
        std::ostringstream md;
        md << "# Run report\n\n";
        md << "- source: `" << src << "`\n";
        md << "- command: " << meta.value("command", "?") << "\n";
        md << "- status: " << meta.value("status", "?") << "\n";
        md << "- config hash: " << meta.value("config_hash", "?") << "\n";
        md << "- version: " << meta.value("version", "?") << "\n";
        if (meta.contains("wall_time_seconds"))
            md << "- wall time: " << std::fixed << std::setprecision(2) << meta["wall_time_seconds"].get<double>()
               << " s\n";
        if (meta.contains("solution")) {
            const auto& s = meta["solution"];
            md << "\n## Solution\n\n";
            md << "- converged: " << (s.value("converged", false) ? "yes" : "no") << "\n";
            md << "- iterations: " << s.value("iterations", 0) << "\n";
            md << "- payoff J: " << format_double(s.value("payoff", 0.0)) << "\n";
            md << "- boundary mass: " << format_double(s.value("boundary_mass", 0.0)) << "\n";
        }
        for (const char* key : {"common_noise", "monotonicity", "reference"})
            if (meta.contains(key)) md << "\n## " << key << "\n\n```\n" << meta[key].dump(2) << "\n```\n";

        md << "\n## Files\n\n| file | rows |\n|---|---|\n";
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(src))
            if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            std::ifstream in(f);
            long rows = -1;
            std::string line;
            while (std::getline(in, line)) ++rows;
            md << "| " << f.filename().string() << " | " << rows << " |\n";
        }

        if (fs::exists(path_in(src, "flow.csv")) && meta.contains("solution")) {
            MFGSolution sol = read_solution(src);
            plot_residuals(run.file("residuals.svg"), sol);
            plot_density_snapshots(run.file("density.svg"), sol.flow);
            md << "\nPlots: residuals.svg, density.svg\n";
        }
        if (fs::exists(path_in(src, "convergence.csv"))) {
            std::vector<std::string> header;
            ConvergenceTable table;
            for (const auto& row : read_text_csv(path_in(src, "convergence.csv"), header)) {
                if (row.size() != 4) throw ConfigError("convergence.csv rows need 4 columns");
                table.records.push_back({std::stoi(row[0]), std::stod(row[1]), row[2], std::stod(row[3])});
            }
            plot_convergence(run.dir(), table);
            md << "\n## Slopes\n\n| metric | t | slope |\n|---|---|---|\n";
            if (fs::exists(path_in(src, "slopes.csv")))
                for (const auto& row : read_text_csv(path_in(src, "slopes.csv"), header))
                    if (row.size() >= 3) md << "| " << row[0] << " | " << row[1] << " | " << row[2] << " |\n";
        }
        {
            std::ofstream out(run.file("report.md"));
            out << md.str();
        }
        if (ctx.log) *ctx.log << md.str();
        CommandResult res;
        res.message = "ok";
        run.close("ok");
        return res;
    });
}

CommandResult run_command(const std::string& name, const CommandContext& ctx)
{
    try {
        if (name == "solve") return cmd_solve(ctx);
        if (name == "simulate") return cmd_simulate(ctx);
        if (name == "nash") return cmd_nash(ctx);
        if (name == "convergence") return cmd_convergence(ctx);
        if (name == "graphon-study") return cmd_graphon_study(ctx);
        if (name == "report") return cmd_report(ctx);
        return {ExitCode::user_error, "", "unknown command '" + name + "'"};
    } catch (const OscillationError& e) {
        std::ostringstream os;
        os << e.what() << " (suggested damping " << e.suggested_damping() << ")";
        return {e.code(), "", os.str()};
    } catch (const DomainError& e) {
        std::ostringstream os;
        os << e.what() << " (required domain [" << e.required_lo() << ", " << e.required_hi() << "])";
        return {e.code(), "", os.str()};
    } catch (const Error& e) {
        return {e.code(), "", e.what()};
    } catch (const std::exception& e) {
        return {ExitCode::user_error, "", std::string("unexpected error: ") + e.what()};
    }
}

} // namespace gmfg
