#include "gmfg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gmfg/error.hpp"

namespace gmfg {

GaussHermiteRule gauss_hermite(int points)
{
    if (points < 1 || points > 200) throw ContractError("Gauss-Hermite rule needs 1..200 points");
    const int n = points;
    std::vector<double> x(n), w(n);
    const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
    const int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * n + 1) - 1.85575 * std::pow(2.0 * n + 1, -0.16667);
        else if (i == 1)
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * x[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * x[1];
        else
            z = 2.0 * z - x[i - 2];
        double pp = 0.0;
        for (int it = 0; it < 200; ++it) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    GaussHermiteRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        // ascending order
        rule.nodes[i] = -x[i] * std::numbers::sqrt2;
        rule.weights[i] = w[i] / std::sqrt(std::numbers::pi);
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return rule;
}

namespace {

double edge_slope(double d0, double d1)
{
    // three-point one-sided estimate, limited to keep monotonicity
    double s = (3.0 * d0 - d1) / 2.0;
    if (s * d0 <= 0.0) return 0.0;
    if (d0 * d1 <= 0.0 && std::abs(s) > std::abs(3.0 * d0)) return 3.0 * d0;
    return s;
}

} // namespace

void pchip_slopes(std::span<const double> y, std::span<double> m)
{
    const std::size_t n = y.size();
    if (n == 0) return;
    if (n == 1) {
        m[0] = 0.0;
        return;
    }
    if (n == 2) {
        m[0] = m[1] = y[1] - y[0];
        return;
    }
    for (std::size_t j = 1; j + 1 < n; ++j) {
        double a = y[j] - y[j - 1];
        double b = y[j + 1] - y[j];
        m[j] = (a * b > 0.0) ? 2.0 / (1.0 / a + 1.0 / b) : 0.0;
    }
    m[0] = edge_slope(y[1] - y[0], y[2] - y[1]);
    m[n - 1] = edge_slope(y[n - 1] - y[n - 2], y[n - 2] - y[n - 3]);
}

MonotoneCubic::MonotoneCubic(double x0, double h, std::vector<double> y)
    : x0_(x0), h_(h), y_(std::move(y)), m_(y_.size())
{
    if (y_.empty() || !(h > 0.0)) throw ContractError("MonotoneCubic needs samples and a positive spacing");
    pchip_slopes(y_, m_);
}

double MonotoneCubic::operator()(double x) const
{
    const std::size_t n = y_.size();
    double s = (x - x0_) / h_;
    if (n == 1 || s <= 0.0) return y_.front();
    if (s >= static_cast<double>(n - 1)) return y_.back();
    auto b = static_cast<std::size_t>(s);
    if (b >= n - 1) b = n - 2;
    double f = s - static_cast<double>(b);
    auto hb = hermite_basis(f);
    return hb.h00 * y_[b] + hb.h10 * m_[b] + hb.h01 * y_[b + 1] + hb.h11 * m_[b + 1];
}

double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

} // namespace gmfg
