#pragma once

#include <span>
#include <string>
#include <vector>

#include "gmfg/meanfield.hpp"

namespace gmfg {

/// A probability measure on R made of weighted atoms plus an optional
/// piecewise-constant density on uniform cells.
class Measure1D {
public:
    /// Equal-weight atoms at the sample points.
    static Measure1D samples(std::span<const double> x);
    static Measure1D weighted(std::span<const double> x, std::span<const double> w);
    /// Density p on cells [lo + j*dx, lo + (j+1)*dx).
    static Measure1D density(double lo, double dx, std::span<const double> p);

    double mass() const;
    /// Right-continuous CDF.
    double cdf(double z) const;
    /// Every point where the CDF can jump or change slope.
    std::vector<double> breakpoints() const;

private:
    std::vector<double> atoms_;     ///< sorted
    std::vector<double> atom_cum_;  ///< cumulative weights after each atom
    double lo_ = 0.0;
    double dx_ = 0.0;
    std::vector<double> cell_cum_;  ///< cumulative cell masses, size cells + 1
};

/// Exact int |F_a - F_b| dx over merged breakpoints. Both inputs must carry
/// unit mass within 1e-8.
double wasserstein1_1d(const Measure1D& a, const Measure1D& b);

struct LabelW1 {
    double value = 0.0;
    std::vector<double> per_label;
    int empty_bins = 0;  ///< bins filled from the nearest nonempty bin
};

/// sum_k (1/K) W1(positions of players in label cell k, p(t_i, ., u_k)).
LabelW1 label_resolved_w1(std::span<const double> positions, std::span<const double> labels,
                          const DensityFlow& flow, int time_index);

/// sup_t sum_l w_l int |fine(t, u_l) - coarse(t, cell(u_l))| dx, where each
/// fine label is compared against the coarse label cell that contains it.
/// Both flows share time and space grids.
double label_mapped_l1(const DensityFlow& coarse, const DensityFlow& fine);

struct SlopeFit {
    std::string metric;
    double t = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    int points = 0;
};

/// Least-squares slope of log(value) against log(n). Needs >= 3 points;
/// a nonpositive value makes the slope NaN.
SlopeFit fit_loglog(std::span<const double> n, std::span<const double> values);

struct ConvergenceRecord {
    int n = 0;
    double t = 0.0;
    std::string metric;
    double value = 0.0;
};

/// Records sorted by (metric, t, n) plus one slope per (metric, t).
struct ConvergenceTable {
    std::vector<ConvergenceRecord> records;
    std::vector<SlopeFit> slopes;
};

ConvergenceTable convergence_table(std::vector<ConvergenceRecord> records);

} // namespace gmfg
