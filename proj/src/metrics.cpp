#include "gmfg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "gmfg/error.hpp"

namespace gmfg {

Measure1D Measure1D::samples(std::span<const double> x)
{
    std::vector<double> w(x.size(), x.empty() ? 0.0 : 1.0 / static_cast<double>(x.size()));
    return weighted(x, w);
}

Measure1D Measure1D::weighted(std::span<const double> x, std::span<const double> w)
{
    if (x.size() != w.size()) throw ContractError("atoms and weights differ in length");
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    Measure1D m;
    m.atoms_.reserve(x.size());
    m.atom_cum_.reserve(x.size());
    double cum = 0.0;
    for (std::size_t r : idx) {
        if (!(w[r] >= 0.0) || !std::isfinite(x[r])) throw ContractError("atoms need finite positions and weights >= 0");
        cum += w[r];
        m.atoms_.push_back(x[r]);
        m.atom_cum_.push_back(cum);
    }
    return m;
}

Measure1D Measure1D::density(double lo, double dx, std::span<const double> p)
{
    if (!(dx > 0.0)) throw ContractError("density cells need dx > 0");
    Measure1D m;
    m.lo_ = lo;
    m.dx_ = dx;
    m.cell_cum_.assign(p.size() + 1, 0.0);
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (!(p[j] >= 0.0)) throw ContractError("density must be nonnegative");
        m.cell_cum_[j + 1] = m.cell_cum_[j] + p[j] * dx;
    }
    return m;
}

double Measure1D::mass() const
{
    double s = atom_cum_.empty() ? 0.0 : atom_cum_.back();
    if (!cell_cum_.empty()) s += cell_cum_.back();
    return s;
}

double Measure1D::cdf(double z) const
{
    double s = 0.0;
    if (!atoms_.empty()) {
        auto it = std::upper_bound(atoms_.begin(), atoms_.end(), z);
        if (it != atoms_.begin()) s += atom_cum_[static_cast<std::size_t>(it - atoms_.begin()) - 1];
    }
    if (cell_cum_.size() > 1) {
        const std::size_t cells = cell_cum_.size() - 1;
        double u = (z - lo_) / dx_;
        if (u >= static_cast<double>(cells)) {
            s += cell_cum_.back();
        } else if (u > 0.0) {
            auto j = static_cast<std::size_t>(u);
            double f = u - static_cast<double>(j);
            s += cell_cum_[j] + f * (cell_cum_[j + 1] - cell_cum_[j]);
        }
    }
    return s;
}

std::vector<double> Measure1D::breakpoints() const
{
    std::vector<double> b(atoms_);
    if (cell_cum_.size() > 1)
        for (std::size_t j = 0; j < cell_cum_.size(); ++j) b.push_back(lo_ + static_cast<double>(j) * dx_);
    return b;
}

namespace {

void require_unit(const Measure1D& m, const char* which)
{
    double mass = m.mass();
    if (std::abs(mass - 1.0) > 1e-8) {
        std::ostringstream os;
        os << "W1 input '" << which << "' is not normalized (mass " << mass << ")";
        throw ContractError(os.str());
    }
}

// int_0^h |d0 + s*d1| ds for a linear function
double abs_linear_integral(double d0, double d1, double h)
{
    double e = d0 + d1 * h;
    if (d0 * e >= 0.0) return 0.5 * h * (std::abs(d0) + std::abs(e));
    double root = -d0 / d1;
    return 0.5 * root * std::abs(d0) + 0.5 * (h - root) * std::abs(e);
}

} // namespace

double wasserstein1_1d(const Measure1D& a, const Measure1D& b)
{
    require_unit(a, "a");
    require_unit(b, "b");
    std::vector<double> z = a.breakpoints();
    auto zb = b.breakpoints();
    z.insert(z.end(), zb.begin(), zb.end());
    std::sort(z.begin(), z.end());
    z.erase(std::unique(z.begin(), z.end()), z.end());
    double total = 0.0;
    for (std::size_t m = 0; m + 1 < z.size(); ++m) {
        const double h = z[m + 1] - z[m];
        if (h <= 0.0) continue;
        const double mid = z[m] + 0.5 * h;
        // both CDFs are linear on the open interval
        double d0 = a.cdf(z[m]) - b.cdf(z[m]);
        double dm = a.cdf(mid) - b.cdf(mid);
        double slope = (dm - d0) / (0.5 * h);
        total += abs_linear_integral(d0, slope, h);
    }
    return total;
}

LabelW1 label_resolved_w1(std::span<const double> positions, std::span<const double> labels, const DensityFlow& flow,
                          int time_index)
{
    const Grids& g = flow.grids;
    if (positions.size() != labels.size() || positions.empty()) throw ContractError("positions and labels differ in length");
    if (time_index < 0 || time_index > g.nt) throw ContractError("time index out of range");
    const int K = g.labels;
    std::vector<std::vector<double>> bins(static_cast<std::size_t>(K));
    for (std::size_t i = 0; i < positions.size(); ++i) {
        int c = static_cast<int>(std::ceil(labels[i] * K - 1e-9)) - 1;
        bins[static_cast<std::size_t>(std::clamp(c, 0, K - 1))].push_back(positions[i]);
    }
    LabelW1 out;
    out.per_label.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        const std::vector<double>* src = &bins[static_cast<std::size_t>(k)];
        if (src->empty()) {
            ++out.empty_bins;
            for (int d = 1; d < K && src->empty(); ++d) {
                if (k - d >= 0 && !bins[static_cast<std::size_t>(k - d)].empty()) src = &bins[static_cast<std::size_t>(k - d)];
                else if (k + d < K && !bins[static_cast<std::size_t>(k + d)].empty()) src = &bins[static_cast<std::size_t>(k + d)];
            }
        }
        Measure1D emp = Measure1D::samples(*src);
        Measure1D grid = Measure1D::density(g.x_lo, g.dx(), flow.row(time_index, k));
        double w = wasserstein1_1d(emp, grid);
        out.per_label[static_cast<std::size_t>(k)] = w;
        out.value += w / K;
    }
    return out;
}

double label_mapped_l1(const DensityFlow& coarse, const DensityFlow& fine)
{
    const Grids& gc = coarse.grids;
    const Grids& gf = fine.grids;
    if (gc.nt != gf.nt || gc.nx != gf.nx || gc.T != gf.T || gc.x_lo != gf.x_lo || gc.x_hi != gf.x_hi)
        throw ContractError("label-mapped distance needs common time and space grids");
    const int Kc = gc.labels, Kf = gf.labels;
    const double dx = gf.dx();
    double worst = 0.0;
    for (int i = 0; i <= gf.nt; ++i) {
        double layer = 0.0;
        for (int l = 0; l < Kf; ++l) {
            const int c = std::min(Kc - 1, static_cast<int>(std::floor(gf.label(l) * Kc)));
            auto a = fine.row(i, l);
            auto b = coarse.row(i, c);
            double s = 0.0;
            for (std::size_t j = 0; j < a.size(); ++j) s += std::abs(a[j] - b[j]);
            layer += s * dx / Kf;
        }
        worst = std::max(worst, layer);
    }
    return worst;
}

SlopeFit fit_loglog(std::span<const double> n, std::span<const double> values)
{
    if (n.size() != values.size()) throw ContractError("slope fit inputs differ in length");
    if (n.size() < 3) throw ContractError("slope fit needs at least 3 values of n");
    SlopeFit fit;
    fit.points = static_cast<int>(n.size());
    for (double v : values)
        if (!(v > 0.0)) {
            fit.slope = fit.intercept = std::numeric_limits<double>::quiet_NaN();
            return fit;
        }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(n.size());
    for (std::size_t i = 0; i < n.size(); ++i) {
        double x = std::log(n[i]), y = std::log(values[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double den = m * sxx - sx * sx;
    if (den == 0.0) throw ContractError("slope fit needs distinct values of n");
    fit.slope = (m * sxy - sx * sy) / den;
    fit.intercept = (sy - fit.slope * sx) / m;
    return fit;
}

ConvergenceTable convergence_table(std::vector<ConvergenceRecord> records)
{
    std::stable_sort(records.begin(), records.end(), [](const ConvergenceRecord& a, const ConvergenceRecord& b) {
        if (a.metric != b.metric) return a.metric < b.metric;
        if (a.t != b.t) return a.t < b.t;
        return a.n < b.n;
    });
    ConvergenceTable out;
    std::map<std::pair<std::string, double>, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& r : records) {
        auto& gr = groups[{r.metric, r.t}];
        gr.first.push_back(r.n);
        gr.second.push_back(r.value);
    }
    for (const auto& [key, xy] : groups) {
        if (xy.first.size() < 3) throw ContractError("convergence table needs at least 3 values of n per series");
        SlopeFit f = fit_loglog(xy.first, xy.second);
        f.metric = key.first;
        f.t = key.second;
        out.slopes.push_back(f);
    }
    out.records = std::move(records);
    return out;
}

} // namespace gmfg
