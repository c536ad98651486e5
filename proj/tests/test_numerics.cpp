#include <cmath>
#include <vector>

#include "doctest.h"
#include "gmfg/numerics.hpp"
#include "gmfg/rng.hpp"

using namespace gmfg;

TEST_CASE("gauss-hermite reproduces standard normal moments")
{
    for (int q : {5, 11, 21, 41}) {
        auto rule = gauss_hermite(q);
        REQUIRE(rule.nodes.size() == static_cast<std::size_t>(q));
        double m0 = 0, m1 = 0, m2 = 0, m4 = 0, m6 = 0;
        for (int i = 0; i < q; ++i) {
            double z = rule.nodes[i], w = rule.weights[i];
            m0 += w;
            m1 += w * z;
            m2 += w * z * z;
            m4 += w * std::pow(z, 4);
            m6 += w * std::pow(z, 6);
        }
        CHECK(m0 == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(std::abs(m1) < 1e-13);
        CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(m4 == doctest::Approx(3.0).epsilon(1e-11));
        CHECK(m6 == doctest::Approx(15.0).epsilon(1e-10));
    }
}

TEST_CASE("gauss-hermite integrates cos against the normal law")
{
    // E[cos(aZ)] = exp(-a^2/2)
    auto rule = gauss_hermite(21);
    for (double a : {0.3, 1.0, 2.0}) {
        double s = 0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * std::cos(a * rule.nodes[i]);
        CHECK(std::abs(s - std::exp(-0.5 * a * a)) < 1e-10);
    }
}

TEST_CASE("monotone cubic is exact on linear data and stays monotone")
{
    std::vector<double> lin;
    for (int j = 0; j < 11; ++j) lin.push_back(2.0 + 3.0 * (0.5 * j));
    MonotoneCubic f(0.0, 0.5, lin);
    for (double x = 0.0; x <= 5.0; x += 0.137) CHECK(f(x) == doctest::Approx(2.0 + 3.0 * x).epsilon(1e-13));
    CHECK(f(-1.0) == doctest::Approx(2.0));
    CHECK(f(9.0) == doctest::Approx(17.0));

    // step data: no overshoot, nondecreasing everywhere
    std::vector<double> step = {0, 0, 0, 0, 1, 1, 1, 1};
    MonotoneCubic g(0.0, 1.0, step);
    double prev = -1.0;
    for (double x = 0.0; x <= 7.0; x += 0.01) {
        double v = g(x);
        CHECK(v >= prev - 1e-15);
        CHECK(v >= -1e-15);
        CHECK(v <= 1.0 + 1e-15);
        prev = v;
    }
}

TEST_CASE("pchip slopes vanish at local extrema")
{
    std::vector<double> y = {0, 1, 3, 2, 2, 5};
    std::vector<double> m(y.size());
    pchip_slopes(y, m);
    CHECK(m[2] == 0.0);  // local max
    CHECK(m[3] == 0.0);  // flat neighbour
    CHECK(m[1] > 0.0);
}

TEST_CASE("normal cdf matches erfc")
{
    for (double x = -6.0; x <= 6.0; x += 0.25)
        CHECK(std::abs(normal_cdf(x) - 0.5 * std::erfc(-x / std::sqrt(2.0))) < 1e-15);
}

TEST_CASE("compensated sum recovers small addends")
{
    CompensatedSum s;
    s.add(1.0);
    for (int i = 0; i < 1000000; ++i) s.add(1e-16);
    CHECK(std::abs(s.value() - (1.0 + 1e-10)) < 1e-15);
}

TEST_CASE("noise streams are pure functions of their address")
{
    NoiseStream a(7, 3), b(7, 3), c(7, 4), d(8, 3);
    CHECK(a.normal(10, 2) == b.normal(10, 2));
    CHECK(a.normal(10, 2) != c.normal(10, 2));
    CHECK(a.normal(10, 2) != d.normal(10, 2));
    CHECK(a.normal(10, 2) != a.normal(11, 2));

    // moments of 2e5 draws
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double z = a.normal(static_cast<std::uint64_t>(i), 0);
        s += z;
        s2 += z * z;
    }
    CHECK(std::abs(s / n) < 4.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
}
