#pragma once

#include <span>
#include <vector>

namespace gmfg {

/// Gauss-Hermite rule for the standard normal weight: E[f(Z)] ~ sum_q w_q f(z_q).
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Physicists' nodes by Newton iteration on the orthonormal recurrence,
/// rescaled to the probabilists' convention (nodes * sqrt2, weights / sqrt(pi)).
GaussHermiteRule gauss_hermite(int points);

/// Fritsch-Carlson/Butland slopes for monotone piecewise-cubic Hermite
/// interpolation on a uniform grid. Returned slopes are per grid step
/// (already multiplied by the spacing).
void pchip_slopes(std::span<const double> y, std::span<double> slopes_times_h);

/// Hermite cubic basis at fraction f in [0, 1].
struct HermiteBasis {
    double h00, h10, h01, h11;
};

inline HermiteBasis hermite_basis(double f)
{
    double f2 = f * f;
    double f3 = f2 * f;
    return {2 * f3 - 3 * f2 + 1, f3 - 2 * f2 + f, -2 * f3 + 3 * f2, f3 - f2};
}

/// Monotone cubic interpolant of uniformly spaced samples y at x0 + j*h.
/// Values outside [x0, x0 + (n-1)h] are clamped to the end samples.
class MonotoneCubic {
public:
    MonotoneCubic() = default;
    MonotoneCubic(double x0, double h, std::vector<double> y);

    double operator()(double x) const;
    bool in_range(double x) const { return x >= x0_ && x <= x0_ + h_ * static_cast<double>(y_.size() - 1); }

private:
    double x0_ = 0.0;
    double h_ = 1.0;
    std::vector<double> y_;
    std::vector<double> m_;
};

/// Kahan-compensated running sum.
class CompensatedSum {
public:
    void add(double v)
    {
        double y = v - c_;
        double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0;
    double c_ = 0.0;
};

/// Standard normal CDF.
double normal_cdf(double x);

} // namespace gmfg
