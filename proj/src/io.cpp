#include "gmfg/io.hpp"

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gmfg/error.hpp"

namespace gmfg {

std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path, std::initializer_list<const char*> header)
    : f_(std::fopen(path.c_str(), "wb")), path_(path)
{
    if (!f_) throw Error("cannot write '" + path + "': " + std::strerror(errno));
    for (const char* h : header) text(h);
    end_row();
}

CsvWriter::~CsvWriter()
{
    if (f_) std::fclose(f_);
}

void CsvWriter::sep()
{
    if (!first_) std::fputc(',', f_);
    first_ = false;
}

CsvWriter& CsvWriter::num(double v)
{
    sep();
    std::fprintf(f_, "%.17g", v);
    return *this;
}

CsvWriter& CsvWriter::integer(long long v)
{
    sep();
    std::fprintf(f_, "%lld", v);
    return *this;
}

CsvWriter& CsvWriter::text(const std::string& s)
{
    sep();
    std::fputs(s.c_str(), f_);
    return *this;
}

void CsvWriter::end_row()
{
    std::fputc('\n', f_);
    first_ = true;
}

std::vector<std::vector<double>> read_numeric_csv(const std::string& path, std::vector<std::string>* header)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("'" + path + "' is empty");
    if (header) {
        header->clear();
        std::stringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header->push_back(cell);
    }
    std::vector<std::vector<double>> rows;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        const char* s = line.c_str();
        while (*s) {
            char* end = nullptr;
            double v = std::strtod(s, &end);
            if (end == s) throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number");
            row.push_back(v);
            s = end;
            if (*s == ',') ++s;
            else if (*s && *s != '\r') throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed row");
            else break;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

void write_field(const std::string& path, const LabelField& f, const char* name)
{
    const Grids& g = f.grids;
    CsvWriter w(path, {"t", "u", "x", name});
    const auto xs = g.xs();
    for (int i = 0; i <= g.nt; ++i)
        for (int k = 0; k < g.labels; ++k)
            for (int j = 0; j < g.nx; ++j) {
                w.num(g.t(i)).num(g.label(k)).num(xs[static_cast<std::size_t>(j)]).num(f.at(i, k, j));
                w.end_row();
            }
}

LabelField read_field(const std::string& path, const Grids& g)
{
    auto rows = read_numeric_csv(path);
    const std::size_t expect = static_cast<std::size_t>(g.nt + 1) * g.labels * g.nx;
    if (rows.size() != expect)
        throw ConfigError("'" + path + "' has " + std::to_string(rows.size()) + " rows, expected " +
                          std::to_string(expect));
    LabelField f(g);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != 4) throw ConfigError("'" + path + "' row " + std::to_string(r + 2) + " needs 4 columns");
        f.data[r] = rows[r][3];
    }
    return f;
}

} // namespace

void write_solution(const std::string& dir, const MFGSolution& s)
{
    namespace fs = std::filesystem;
    write_field((fs::path(dir) / "flow.csv").string(), s.flow, "p");
    write_field((fs::path(dir) / "gradient.csv").string(), s.gradient, "v");
    write_field((fs::path(dir) / "feedback.csv").string(), s.feedback.strict, "alpha");
    CsvWriter w((fs::path(dir) / "residuals.csv").string(), {"iteration", "gradient", "density", "damping"});
    for (const auto& r : s.history) {
        w.integer(r.iteration).num(r.gradient).num(r.density).num(r.damping);
        w.end_row();
    }
}

nlohmann::ordered_json solution_summary(const MFGSolution& s)
{
    const Grids& g = s.grids;
    nlohmann::ordered_json j;
    j["grids"] = {{"T", g.T}, {"nt", g.nt}, {"x_lo", g.x_lo}, {"x_hi", g.x_hi}, {"nx", g.nx}, {"labels", g.labels}};
    j["converged"] = s.converged;
    j["iterations"] = s.iterations;
    j["payoff"] = s.payoff;
    j["flagged"] = s.flagged;
    j["boundary_mass"] = s.boundary_mass;
    if (!s.history.empty()) {
        j["final_residual_gradient"] = s.history.back().gradient;
        j["final_residual_density"] = s.history.back().density;
    }
    return j;
}

MFGSolution read_solution(const std::string& dir)
{
    namespace fs = std::filesystem;
    const fs::path meta = fs::path(dir) / "meta.json";
    if (!fs::exists(meta) || !fs::exists(fs::path(dir) / "flow.csv"))
        throw ConfigError("'" + dir + "' is not a solve run directory (meta.json or flow.csv missing)");
    nlohmann::json j = read_json(meta.string());
    if (!j.contains("solution")) throw ConfigError("'" + meta.string() + "' has no solution record");
    const auto& js = j["solution"];
    MFGSolution s;
    Grids& g = s.grids;
    const auto& jg = js.at("grids");
    g.T = jg.at("T").get<double>();
    g.nt = jg.at("nt").get<int>();
    g.x_lo = jg.at("x_lo").get<double>();
    g.x_hi = jg.at("x_hi").get<double>();
    g.nx = jg.at("nx").get<int>();
    g.labels = jg.at("labels").get<int>();
    g.validate();
    s.converged = js.at("converged").get<bool>();
    s.iterations = js.at("iterations").get<int>();
    s.payoff = js.at("payoff").get<double>();
    s.flagged = js.value("flagged", false);
    s.boundary_mass = js.value("boundary_mass", 0.0);
    s.flow = read_field((fs::path(dir) / "flow.csv").string(), g);
    s.gradient = read_field((fs::path(dir) / "gradient.csv").string(), g);
    s.feedback.strict = read_field((fs::path(dir) / "feedback.csv").string(), g);
    auto r0 = s.flow.row(0, 0);
    s.initial.assign(r0.begin(), r0.end());
    for (const auto& row : read_numeric_csv((fs::path(dir) / "residuals.csv").string())) {
        if (row.size() != 4) throw ConfigError("residuals.csv rows need 4 columns");
        s.history.push_back({static_cast<int>(row[0]), row[1], row[2], row[3]});
    }
    return s;
}

void write_empirical_flow(const std::string& path, const Trajectory& traj)
{
    CsvWriter w(path, {"t", "i", "u", "x"});
    for (std::size_t r = 0; r < traj.times.size(); ++r)
        for (std::size_t i = 0; i < traj.positions[r].size(); ++i) {
            w.num(traj.times[r]).integer(static_cast<long long>(i) + 1).num(traj.labels[i]).num(traj.positions[r][i]);
            w.end_row();
        }
}

void write_positions_binary(const std::string& path, const Trajectory& traj)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    for (const auto& rec : traj.positions)
        out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size() * sizeof(double)));
}

void write_payoffs(const std::string& path, const PayoffEstimate& est, std::span<const double> labels)
{
    CsvWriter w(path, {"i", "u", "J_mean", "J_se"});
    for (std::size_t i = 0; i < est.mean.size(); ++i) {
        w.integer(static_cast<long long>(i) + 1).num(labels[i]).num(est.mean[i]).num(est.se[i]);
        w.end_row();
    }
}

void write_exploitability(const std::string& path, const std::vector<ExploitabilityReport>& reports)
{
    CsvWriter w(path, {"n", "i", "u", "method", "J_base", "J_dev", "delta", "se"});
    for (const auto& rep : reports)
        for (const auto& p : rep.players) {
            w.integer(rep.n).integer(p.player + 1).num(p.label).text(exploit_method_name(rep.method));
            w.num(p.j_base).num(p.j_dev).num(p.delta).num(p.se);
            w.end_row();
        }
}

void write_monotonicity(const std::string& path, std::span<const double> values)
{
    CsvWriter w(path, {"pair_id", "value"});
    for (std::size_t i = 0; i < values.size(); ++i) {
        w.integer(static_cast<long long>(i)).num(values[i]);
        w.end_row();
    }
}

void write_convergence(const std::string& dir, const ConvergenceTable& table)
{
    namespace fs = std::filesystem;
    {
        CsvWriter w((fs::path(dir) / "convergence.csv").string(), {"n", "t", "metric", "value"});
        for (const auto& r : table.records) {
            w.integer(r.n).num(r.t).text(r.metric).num(r.value);
            w.end_row();
        }
    }
    CsvWriter w((fs::path(dir) / "slopes.csv").string(), {"metric", "t", "slope", "intercept", "points"});
    for (const auto& s : table.slopes) {
        w.text(s.metric).num(s.t).num(s.slope).num(s.intercept).integer(s.points);
        w.end_row();
    }
}

void write_json(const std::string& path, const nlohmann::ordered_json& j)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

} // namespace gmfg
