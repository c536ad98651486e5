#pragma once

#include <cstdio>
#include <initializer_list>
#include <string>
#include <vector>

#include "gmfg/meanfield.hpp"
#include "gmfg/metrics.hpp"
#include "gmfg/nash.hpp"
#include "gmfg/particles.hpp"
#include "json.hpp"

namespace gmfg {

/// Plain CSV writer. Numbers use %.17g so values round-trip exactly.
class CsvWriter {
public:
    CsvWriter(const std::string& path, std::initializer_list<const char*> header);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    CsvWriter& num(double v);
    CsvWriter& integer(long long v);
    CsvWriter& text(const std::string& s);
    void end_row();

private:
    void sep();
    std::FILE* f_;
    std::string path_;
    bool first_ = true;
};

/// Rows of a numeric CSV file after its header.
std::vector<std::vector<double>> read_numeric_csv(const std::string& path, std::vector<std::string>* header = nullptr);

std::string format_double(double v);

/// flow.csv, gradient.csv, feedback.csv and residuals.csv.
void write_solution(const std::string& dir, const MFGSolution& solution);

/// Grid and status fields stored in meta.json under "solution".
nlohmann::ordered_json solution_summary(const MFGSolution& solution);

/// Rebuilds a solution from a solve run directory (fields not written to
/// disk, such as per-iteration flags, come back from meta.json).
MFGSolution read_solution(const std::string& dir);

void write_empirical_flow(const std::string& path, const Trajectory& traj);
/// Raw little-endian doubles, records x players, preceded by no header.
void write_positions_binary(const std::string& path, const Trajectory& traj);
void write_payoffs(const std::string& path, const PayoffEstimate& est, std::span<const double> labels);
void write_exploitability(const std::string& path, const std::vector<ExploitabilityReport>& reports);
void write_monotonicity(const std::string& path, std::span<const double> values);
void write_convergence(const std::string& dir, const ConvergenceTable& table);

void write_json(const std::string& path, const nlohmann::ordered_json& j);
nlohmann::json read_json(const std::string& path);

} // namespace gmfg
