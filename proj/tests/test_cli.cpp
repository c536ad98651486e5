#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "doctest.h"
#include "gmfg/io.hpp"
#include "gmfg/plot.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;  // stdout: the run directory, when one was made
    std::string err;
};

fs::path scratch()
{
    static fs::path root = [] {
        fs::path p = fs::temp_directory_path() / ("gmfg_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome invoke(const std::string& args, const std::string& env = "")
{
    static int counter = 0;
    const fs::path err = scratch() / ("stderr_" + std::to_string(counter++) + ".txt");
    std::string cmd = env + (env.empty() ? "" : " ") + "\"" GMFG_CLI_PATH "\" " + args + " 2>\"" + err.string() + "\"";
    Outcome o;
    std::FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 512> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), p)) o.out += buf.data();
    int status = ::pclose(p);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.err = slurp(err);
    while (!o.out.empty() && (o.out.back() == '\n' || o.out.back() == '\r')) o.out.pop_back();
    return o;
}

fs::path write_config(const std::string& name, const std::string& text)
{
    fs::path p = scratch() / name;
    std::ofstream(p) << text;
    return p;
}

const char* kNoCoupling = R"(model = { name = "lq-congestion", params = { c_p = 0.0, c_s = 0.0 } }
graphon = { spec = "constant:1" }
grids = { nt = 20, nx = 60, labels = 1 }
solver = { damping = 1.0 }
simulation = { n = [20, 40, 80], reps = 3, steps = 20, seed = 11 }
nash = { exploitability_in_convergence = false }
output = { plots = false }
)";

std::map<std::string, std::string> csv_files(const fs::path& dir)
{
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && (e.path().extension() == ".csv" || e.path().extension() == ".bin"))
            files[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return files;
}

/// Header and rows of a CSV with mixed text and number cells.
std::vector<std::vector<std::string>> read_cells(const fs::path& p, std::vector<std::string>& header)
{
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (first) header = cells;
        else rows.push_back(cells);
        first = false;
    }
    return rows;
}

} // namespace

TEST_CASE("solve on an uncoupled config converges and records its metadata")
{
    fs::path cfg = write_config("nc.toml", kNoCoupling);
    fs::path out = scratch() / "solve";
    Outcome r = invoke("solve --quiet --config \"" + cfg.string() + "\" --out \"" + out.string() + "\"");
    INFO(r.err);
    REQUIRE(r.code == 0);
    REQUIRE(fs::is_directory(r.out));
    for (const char* f : {"flow.csv", "gradient.csv", "feedback.csv", "residuals.csv", "meta.json"})
        CHECK(fs::exists(fs::path(r.out) / f));

    nlohmann::json meta = gmfg::read_json((fs::path(r.out) / "meta.json").string());
    for (const char* key : {"command", "version", "config_hash", "config", "seeds", "threads", "created_utc", "status",
                            "wall_time_seconds"})
        CHECK_MESSAGE(meta.contains(key), key);
    CHECK(meta["command"] == "solve");
    CHECK(meta["status"] == "ok");
    CHECK(meta["config_hash"].get<std::string>().size() == 16);
    CHECK(meta["seeds"]["master"] == 11);
    // the population does not enter: the second pass reproduces the first exactly
    CHECK(meta["solution"]["iterations"].get<int>() <= 2);

    // downstream runs name their input
    Outcome s = invoke("simulate --quiet --config \"" + cfg.string() + "\" --out \"" + out.string() + "\" --run \"" +
                     r.out + "\"");
    INFO(s.err);
    REQUIRE(s.code == 0);
    nlohmann::json smeta = gmfg::read_json((fs::path(s.out) / "meta.json").string());
    CHECK(smeta["input_run"] == r.out);
    CHECK(fs::exists(fs::path(s.out) / "simulate.csv"));

    // a second solve never overwrites the first
    Outcome again = invoke("solve --quiet --config \"" + cfg.string() + "\" --out \"" + out.string() + "\"");
    REQUIRE(again.code == 0);
    CHECK(again.out != r.out);
}

TEST_CASE("config errors exit 1 with a line-anchored message")
{
    fs::path out = scratch() / "bad";
    fs::path malformed = write_config("malformed.toml", "[model]\nname = \"monotone\"\n[grids\nnt = 5\n");
    Outcome a = invoke("solve --config \"" + malformed.string() + "\" --out \"" + out.string() + "\"");
    CHECK(a.code == 1);
    CHECK(a.err.find("malformed.toml:3") != std::string::npos);

    fs::path unknown = write_config("unknown.toml", "[model]\nname = \"monotone\"\n\n[grids]\nnt = 5\nnx_cells = 40\n");
    Outcome b = invoke("solve --config \"" + unknown.string() + "\" --out \"" + out.string() + "\"");
    CHECK(b.code == 1);
    CHECK(b.err.find("unknown.toml:6") != std::string::npos);
    CHECK(b.err.find("nx_cells") != std::string::npos);

    fs::path range = write_config("range.toml", "[solver]\ntol_m = -1e-4\n");
    Outcome c = invoke("solve --config \"" + range.string() + "\" --out \"" + out.string() + "\"");
    CHECK(c.code == 1);
    CHECK(c.err.find("tol_m") != std::string::npos);

    fs::path too_fine = write_config("study.toml", "[graphon_study]\nk = [2, 8]\nreference_labels = 4\n");
    Outcome d = invoke("graphon-study --config \"" + too_fine.string() + "\" --out \"" + out.string() + "\"");
    CHECK(d.code == 1);
    CHECK(d.err.find("reference_labels") != std::string::npos);

    Outcome e = invoke("solve --config \"" + (scratch() / "missing.toml").string() + "\"");
    CHECK(e.code == 1);

    // nothing was created for any of these
    CHECK_FALSE(fs::exists(out));
}

TEST_CASE("downstream commands reject an empty or foreign run directory")
{
    fs::path cfg = write_config("nc_conv.toml", kNoCoupling);
    fs::path empty = scratch() / "empty_run";
    fs::create_directories(empty);
    fs::path out = scratch() / "conv";
    Outcome a = invoke("convergence --quiet --config \"" + cfg.string() + "\" --out \"" + out.string() + "\" --run \"" +
                     empty.string() + "\"");
    CHECK(a.code == 1);
    CHECK(a.err.find("empty_run") != std::string::npos);

    Outcome b = invoke("report --quiet --out \"" + out.string() + "\" --run \"" + empty.string() + "\"");
    CHECK(b.code == 1);

    Outcome c = invoke("report --quiet --out \"" + out.string() + "\"");
    CHECK(c.code == 1);
}

TEST_CASE("a repeated seed reproduces every CSV byte for byte")
{
    fs::path cfg = write_config("nc_repeat.toml", kNoCoupling);
    fs::path out = scratch() / "repeat";
    auto run = [&](const std::string& extra, const std::string& env = "") {
        Outcome r = invoke("convergence --quiet --config \"" + cfg.string() + "\" --out \"" + out.string() + "\" " + extra,
                         env);
        INFO(r.err);
        REQUIRE(r.code == 0);
        return csv_files(r.out);
    };
    auto first = run("--seed 99");
    auto second = run("--seed 99");
    REQUIRE(first.size() >= 5);
    CHECK(first.count("convergence.csv") == 1);
    CHECK(first == second);

    // GMFG_THREADS caps the worker count; the numbers must not move
    auto capped = run("--seed 99", "GMFG_THREADS=1");
    CHECK(first == capped);

    auto other = run("--seed 100");
    CHECK(other.at("convergence_detail.csv") != first.at("convergence_detail.csv"));
}

TEST_CASE("convergence sweep writes the table, slopes and plots")
{
    std::string text = kNoCoupling;
    text.replace(text.find("plots = false"), 13, "plots = true");
    fs::path cfg = write_config("nc_plots.toml", text);
    fs::path out = scratch() / "plots";
    Outcome r = invoke("convergence --quiet --config \"" + cfg.string() + "\" --out \"" + out.string() + "\"");
    INFO(r.err);
    REQUIRE(r.code == 0);
    for (const char* f : {"convergence.csv", "slopes.csv", "w1_vs_n.svg", "payoff_gap_vs_n.svg", "loglog.svg"})
        CHECK_MESSAGE(fs::exists(fs::path(r.out) / f), f);
    std::vector<std::string> header;
    auto rows = read_cells(fs::path(r.out) / "slopes.csv", header);
    CHECK_FALSE(header.empty());
    CHECK(rows.size() >= 2);

    Outcome rep = invoke("report --quiet --out \"" + out.string() + "\" --run \"" + r.out + "\"");
    INFO(rep.err);
    CHECK(rep.code == 0);
    CHECK(fs::exists(fs::path(rep.out) / "meta.json"));
}

TEST_CASE("a three-point synthetic series renders")
{
    gmfg::PlotSeries s{"w1", {100, 400, 1600}, {0.3, 0.15, 0.075}};
    std::string svg = gmfg::render_svg({"synthetic", "n", "w1", true, true}, {s});
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    std::size_t markers = 0;
    for (std::size_t at = svg.find("<circle"); at != std::string::npos; at = svg.find("<circle", at + 1)) ++markers;
    CHECK(markers == 3);
    CHECK(svg.find("<polyline") != std::string::npos);

    // a nonpositive value is dropped on a log axis
    gmfg::PlotSeries bad{"w1", {100, 400, 1600}, {0.3, 0.0, 0.075}};
    std::string svg2 = gmfg::render_svg({"synthetic", "n", "w1", true, true}, {bad});
    markers = 0;
    for (std::size_t at = svg2.find("<circle"); at != std::string::npos; at = svg2.find("<circle", at + 1)) ++markers;
    CHECK(markers == 2);
}

TEST_CASE("graphon study on a constant graphon finds nothing to approximate")
{
    fs::path cfg = write_config("study_const.toml", R"(model = { name = "monotone" }
graphon = { spec = "constant:1" }
grids = { nt = 20, nx = 60 }
graphon_study = { k = [1, 2, 4], reference_labels = 8 }
output = { plots = false }
)");
    fs::path out = scratch() / "study";
    Outcome r = invoke("graphon-study --quiet --config \"" + cfg.string() + "\" --out \"" + out.string() + "\"");
    INFO(r.err);
    REQUIRE(r.code == 0);
    std::vector<std::string> header;
    auto rows = read_cells(fs::path(r.out) / "graphon_study.csv", header);
    REQUIRE(rows.size() == 3);
    auto col = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        REQUIRE(it != header.end());
        return static_cast<std::size_t>(it - header.begin());
    };
    for (const auto& row : rows) {
        auto num = [&](const std::string& name) { return std::stod(row.at(col(name))); };
        CHECK(num("cut_metric") <= 1e-12);
        CHECK(num("cut_to_reference") <= 1e-12);
        CHECK(num("solution_l1") <= 1e-8);
        CHECK(num("converged") == 1.0);
    }
}
