#include "gmfg/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "gmfg/error.hpp"
#include "json.hpp"
#include "toml.hpp"

namespace gmfg {

namespace {

class Reader {
public:
    Reader(const toml::table& table, std::string section, std::string origin)
        : table_(table), section_(std::move(section)), origin_(std::move(origin)) {}

    [[noreturn]] void fail(const toml::node& node, const std::string& msg) const
    {
        throw ConfigError(origin_ + ":" + std::to_string(node.source().begin.line) + ": " + msg);
    }

    void allow(std::initializer_list<const char*> keys) const
    {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, node] : table_) {
            std::string key(k.str());
            if (!ok.count(key)) fail(node, "unknown key '" + key + "' in [" + section_ + "]");
        }
    }

    std::string where(const char* key) const { return "'" + section_ + "." + key + "'"; }

    void number(const char* key, double& out) const
    {
        if (const toml::node* n = table_.get(key)) {
            if (auto v = n->value_exact<double>()) out = *v;
            else if (auto i = n->value_exact<std::int64_t>()) out = static_cast<double>(*i);
            else fail(*n, where(key) + " must be a number");
        }
    }

    void integer(const char* key, int& out) const
    {
        if (const toml::node* n = table_.get(key)) {
            auto v = n->value_exact<std::int64_t>();
            if (!v) fail(*n, where(key) + " must be an integer");
            if (*v < -2147483647 || *v > 2147483647) fail(*n, where(key) + " is out of range");
            out = static_cast<int>(*v);
        }
    }

    void unsigned64(const char* key, std::uint64_t& out) const
    {
        if (const toml::node* n = table_.get(key)) {
            auto v = n->value_exact<std::int64_t>();
            if (!v || *v < 0) fail(*n, where(key) + " must be a nonnegative integer");
            out = static_cast<std::uint64_t>(*v);
        }
    }

    void boolean(const char* key, bool& out) const
    {
        if (const toml::node* n = table_.get(key)) {
            auto v = n->value_exact<bool>();
            if (!v) fail(*n, where(key) + " must be true or false");
            out = *v;
        }
    }

    void string(const char* key, std::string& out) const
    {
        if (const toml::node* n = table_.get(key)) {
            auto v = n->value_exact<std::string>();
            if (!v) fail(*n, where(key) + " must be a string");
            out = *v;
        }
    }

    void int_list(const char* key, std::vector<int>& out) const
    {
        if (const toml::node* n = table_.get(key)) {
            const toml::array* arr = n->as_array();
            if (!arr) fail(*n, where(key) + " must be an array of integers");
            out.clear();
            for (const auto& e : *arr) {
                auto v = e.value_exact<std::int64_t>();
                if (!v) fail(e, where(key) + " must contain integers only");
                out.push_back(static_cast<int>(*v));
            }
        }
    }

    void number_list(const char* key, std::vector<double>& out) const
    {
        if (const toml::node* n = table_.get(key)) {
            const toml::array* arr = n->as_array();
            if (!arr) fail(*n, where(key) + " must be an array of numbers");
            out.clear();
            for (const auto& e : *arr) {
                if (auto v = e.value_exact<double>()) out.push_back(*v);
                else if (auto i = e.value_exact<std::int64_t>()) out.push_back(static_cast<double>(*i));
                else fail(e, where(key) + " must contain numbers only");
            }
        }
    }

    /// Runs `check` and re-raises a plain message as a line-anchored error.
    template <class F>
    void check(const char* key, F&& ok, const std::string& msg) const
    {
        if (!ok()) {
            if (const toml::node* n = table_.get(key)) fail(*n, where(key) + " " + msg);
            throw ConfigError(origin_ + ": " + where(key) + " " + msg);
        }
    }

    const toml::table& table() const { return table_; }

private:
    const toml::table& table_;
    std::string section_;
    std::string origin_;
};

const toml::table& empty_table()
{
    static const toml::table t;
    return t;
}

const toml::table& subtable(const toml::table& root, const char* name, const std::string& origin)
{
    const toml::node* n = root.get(name);
    if (!n) return empty_table();
    const toml::table* t = n->as_table();
    if (!t)
        throw ConfigError(origin + ":" + std::to_string(n->source().begin.line) + ": '" + name + "' must be a table");
    return *t;
}

std::string fnv1a_hex(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& origin)
{
    toml::table root;
    try {
        root = toml::parse(text, origin);
    } catch (const toml::parse_error& e) {
        throw ConfigError(origin + ":" + std::to_string(e.source().begin.line) + ": " + std::string(e.description()));
    }

    ExperimentConfig cfg;
    Reader top(root, "top level", origin);
    top.allow({"model", "graphon", "grids", "solver", "initial", "kernel", "simulation", "nash", "common_noise",
               "graphon_study", "output", "threads"});
    top.integer("threads", cfg.threads);
    top.check("threads", [&] { return cfg.threads >= 1; }, "must be >= 1");

    {
        Reader r(subtable(root, "model", origin), "model", origin);
        r.allow({"name", "params"});
        r.string("name", cfg.model.name);
        const auto names = builtin_models();
        r.check("name", [&] { return std::find(names.begin(), names.end(), cfg.model.name) != names.end(); },
                "names an unknown model");
        const toml::table& params = subtable(r.table(), "params", origin);
        Reader p(params, "model.params", origin);
        const auto defaults = builtin_defaults(cfg.model.name);
        for (const auto& [k, node] : params) {
            std::string key(k.str());
            if (!defaults.count(key)) p.fail(node, "model '" + cfg.model.name + "' has no parameter '" + key + "'");
            double v = 0.0;
            p.number(key.c_str(), v);
            cfg.model.params[key] = v;
        }
    }
    {
        Reader r(subtable(root, "graphon", origin), "graphon", origin);
        r.allow({"spec"});
        r.string("spec", cfg.graphon);
    }
    {
        Reader r(subtable(root, "grids", origin), "grids", origin);
        r.allow({"T", "nt", "x_lo", "x_hi", "nx", "labels"});
        Grids& g = cfg.grids;
        r.number("T", g.T);
        r.integer("nt", g.nt);
        r.number("x_lo", g.x_lo);
        r.number("x_hi", g.x_hi);
        r.integer("nx", g.nx);
        r.integer("labels", g.labels);
        r.check("T", [&] { return g.T > 0.0 && std::isfinite(g.T); }, "must be positive");
        r.check("nt", [&] { return g.nt >= 1; }, "must be >= 1");
        r.check("nx", [&] { return g.nx >= 4; }, "must be >= 4");
        r.check("labels", [&] { return g.labels >= 1; }, "must be >= 1");
        r.check("x_hi", [&] { return g.x_hi > g.x_lo; }, "must exceed x_lo (empty domain)");
    }
    {
        Reader r(subtable(root, "solver", origin), "solver", origin);
        r.allow({"damping", "tol_v", "tol_m", "max_iter", "quad_nodes", "v_max", "guess_shift", "substep_multiplier"});
        SolverOptions& s = cfg.solver;
        r.number("damping", s.damping);
        r.number("tol_v", s.tol_v);
        r.number("tol_m", s.tol_m);
        r.integer("max_iter", s.max_iter);
        r.integer("quad_nodes", s.fk.quad_nodes);
        r.number("v_max", s.fk.v_max);
        r.number("guess_shift", s.guess_shift);
        r.number("substep_multiplier", s.fp.substep_multiplier);
        r.check("damping", [&] { return s.damping > 0.0 && s.damping <= 1.0; }, "must lie in (0, 1]");
        r.check("tol_v", [&] { return s.tol_v > 0.0; }, "must be positive");
        r.check("tol_m", [&] { return s.tol_m > 0.0; }, "must be positive");
        r.check("max_iter", [&] { return s.max_iter >= 1; }, "must be >= 1");
        r.check("quad_nodes", [&] { return s.fk.quad_nodes >= 2 && s.fk.quad_nodes <= 64; }, "must lie in [2, 64]");
        r.check("v_max", [&] { return s.fk.v_max > 0.0; }, "must be positive");
        r.check("substep_multiplier", [&] { return s.fp.substep_multiplier >= 1.0; }, "must be >= 1");
    }
    {
        Reader r(subtable(root, "initial", origin), "initial", origin);
        r.allow({"mean", "sd"});
        r.number("mean", cfg.initial.mean);
        r.number("sd", cfg.initial.sd);
        r.check("sd", [&] { return cfg.initial.sd > 0.0; }, "must be positive");
    }
    {
        Reader r(subtable(root, "kernel", origin), "kernel", origin);
        r.allow({"family", "bandwidth_c"});
        std::string fam = kernel_family_name(cfg.kernel.family);
        r.string("family", fam);
        try {
            cfg.kernel.family = parse_kernel_family(fam);
        } catch (const CatalogError& e) {
            r.check("family", [] { return false; }, std::string("is invalid: ") + e.what());
        }
        r.number("bandwidth_c", cfg.kernel.bandwidth_c);
        r.check("bandwidth_c", [&] { return cfg.kernel.bandwidth_c > 0.0; }, "must be positive");
    }
    {
        Reader r(subtable(root, "simulation", origin), "simulation", origin);
        r.allow({"n", "steps", "record_times", "reps", "seed"});
        SimulationConfig& s = cfg.simulation;
        r.int_list("n", s.n);
        r.integer("steps", s.steps);
        r.number_list("record_times", s.record_times);
        r.integer("reps", s.reps);
        r.unsigned64("seed", s.seed);
        r.check("n", [&] {
            if (s.n.empty()) return false;
            for (int v : s.n)
                if (v < 2) return false;
            return true;
        }, "must be a nonempty list with every n >= 2");
        r.check("steps", [&] { return s.steps >= 1; }, "must be >= 1");
        r.check("reps", [&] { return s.reps >= 1; }, "must be >= 1");
        r.check("record_times", [&] {
            for (double t : s.record_times)
                if (!(t > 0.0) || t > cfg.grids.T + 1e-12) return false;
            return !s.record_times.empty();
        }, "must be a nonempty list of times in (0, T]");
        r.check("record_times", [&] {
            for (double t : s.record_times) {
                double a = t / cfg.grids.T * s.steps, b = t / cfg.grids.dt();
                if (std::abs(a - std::round(a)) > 1e-9 || std::abs(b - std::round(b)) > 1e-9) return false;
            }
            return true;
        }, "must fall on both the particle step grid and the solver time grid");
        r.check("steps", [&] {
            // particle time steps must refine the solver grid so feedback lookups align
            return s.steps % cfg.grids.nt == 0 || cfg.grids.nt % s.steps == 0;
        }, "must be a multiple or a divisor of grids.nt");
    }
    {
        Reader r(subtable(root, "nash", origin), "nash", origin);
        r.allow({"method", "deviators", "profile_shift", "monotonicity_pairs", "exploitability_in_convergence"});
        std::string method = exploit_method_name(cfg.nash.method);
        r.string("method", method);
        try {
            cfg.nash.method = parse_exploit_method(method);
        } catch (const CatalogError& e) {
            r.check("method", [] { return false; }, std::string("is invalid: ") + e.what());
        }
        r.integer("deviators", cfg.nash.deviators);
        r.number("profile_shift", cfg.nash.profile_shift);
        r.integer("monotonicity_pairs", cfg.nash.monotonicity_pairs);
        r.boolean("exploitability_in_convergence", cfg.nash.exploitability_in_convergence);
        r.check("deviators", [&] { return cfg.nash.deviators >= 1; }, "must be >= 1");
        r.check("monotonicity_pairs", [&] { return cfg.nash.monotonicity_pairs >= 1; }, "must be >= 1");
    }
    {
        Reader r(subtable(root, "common_noise", origin), "common_noise", origin);
        r.allow({"paths"});
        r.integer("paths", cfg.common_noise.paths);
        r.check("paths", [&] { return cfg.common_noise.paths >= 1; }, "must be >= 1");
    }
    {
        Reader r(subtable(root, "graphon_study", origin), "graphon_study", origin);
        r.allow({"k", "reference_labels"});
        r.int_list("k", cfg.study.k);
        r.integer("reference_labels", cfg.study.reference_labels);
        r.check("reference_labels", [&] { return cfg.study.reference_labels >= 1; }, "must be >= 1");
        r.check("k", [&] {
            if (cfg.study.k.empty()) return false;
            for (int k : cfg.study.k)
                if (k < 1) return false;
            return true;
        }, "must be a nonempty list of positive integers");
        r.check("k", [&] {
            for (int k : cfg.study.k)
                if (k > cfg.study.reference_labels) return false;
            return true;
        }, "has an entry exceeding graphon_study.reference_labels");
    }
    {
        Reader r(subtable(root, "output", origin), "output", origin);
        r.allow({"plots"});
        r.boolean("plots", cfg.output.plots);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    ExperimentConfig cfg = parse_config(ss.str(), path);
    std::filesystem::path p(path);
    cfg.base_dir = p.has_parent_path() ? p.parent_path().string() : ".";
    return cfg;
}

void ExperimentConfig::validate() const
{
    try {
        grids.validate();
        ModelSpec m = build_model();
        (void)m;
        Graphon g = build_graphon();
        (void)g;
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
}

std::string ExperimentConfig::canonical_json() const
{
    nlohmann::ordered_json j;
    j["model"]["name"] = model.name;
    j["model"]["params"] = nlohmann::json(builtin_defaults(model.name));
    for (const auto& [k, v] : model.params) j["model"]["params"][k] = v;
    j["graphon"] = graphon;
    j["grids"] = {{"T", grids.T}, {"nt", grids.nt}, {"x_lo", grids.x_lo},
                  {"x_hi", grids.x_hi}, {"nx", grids.nx}, {"labels", grids.labels}};
    j["solver"] = {{"damping", solver.damping},         {"tol_v", solver.tol_v},
                   {"tol_m", solver.tol_m},             {"max_iter", solver.max_iter},
                   {"quad_nodes", solver.fk.quad_nodes}, {"v_max", solver.fk.v_max},
                   {"guess_shift", solver.guess_shift}, {"substep_multiplier", solver.fp.substep_multiplier}};
    j["initial"] = {{"mean", initial.mean}, {"sd", initial.sd}};
    j["kernel"] = {{"family", kernel_family_name(kernel.family)}, {"bandwidth_c", kernel.bandwidth_c}};
    j["simulation"] = {{"n", simulation.n},
                       {"steps", simulation.steps},
                       {"record_times", simulation.record_times},
                       {"reps", simulation.reps},
                       {"seed", simulation.seed}};
    j["nash"] = {{"method", exploit_method_name(nash.method)},
                 {"deviators", nash.deviators},
                 {"profile_shift", nash.profile_shift},
                 {"monotonicity_pairs", nash.monotonicity_pairs},
                 {"exploitability_in_convergence", nash.exploitability_in_convergence}};
    j["common_noise"] = {{"paths", common_noise.paths}};
    j["graphon_study"] = {{"k", study.k}, {"reference_labels", study.reference_labels}};
    j["output"] = {{"plots", output.plots}};
    // the thread count is deliberately left out: results do not depend on it
    return j.dump();
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(canonical_json()); }

ModelSpec ExperimentConfig::build_model() const { return make_builtin_model(model.name, model.params); }

Graphon ExperimentConfig::build_graphon() const
{
    const std::string prefix = "file:";
    if (graphon.rfind(prefix, 0) == 0) {
        std::filesystem::path p(graphon.substr(prefix.size()));
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        return Graphon(StepGraphon::load_csv(p.string()), graphon);
    }
    return Graphon::parse(graphon);
}

std::vector<double> ExperimentConfig::build_initial() const
{
    return gaussian_initial(grids, initial.mean, initial.sd);
}

SolverOptions ExperimentConfig::solver_options() const
{
    SolverOptions s = solver;
    s.fk.threads = threads;
    s.fp.threads = threads;
    return s;
}

SimulationSpec ExperimentConfig::simulation_spec() const
{
    SimulationSpec s;
    s.T = grids.T;
    s.steps = simulation.steps;
    s.threads = threads;
    // a record at every requested time: the gcd of the step indices
    long g = 0;
    for (double t : simulation.record_times) {
        long idx = std::lround(t / grids.T * simulation.steps);
        long a = g, b = idx;
        while (b != 0) {
            long r = a % b;
            a = b;
            b = r;
        }
        g = a;
    }
    s.record_every = g > 0 ? static_cast<int>(g) : simulation.steps;
    if (simulation.steps % s.record_every != 0) s.record_every = 1;
    return s;
}

} // namespace gmfg
