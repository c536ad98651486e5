#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "gmfg/error.hpp"
#include "gmfg/graphon.hpp"
#include "gmfg/rng.hpp"

using namespace gmfg;

namespace {

// Cut norm of a uniform step kernel by enumerating both row and column unions.
double brute_cut(int k, const std::vector<double>& v)
{
    double best = 0.0;
    for (int a = 0; a < (1 << k); ++a)
        for (int b = 0; b < (1 << k); ++b) {
            double s = 0.0;
            for (int i = 0; i < k; ++i)
                if (a >> i & 1)
                    for (int j = 0; j < k; ++j)
                        if (b >> j & 1) s += v[i * k + j];
            best = std::max(best, std::abs(s) / (k * k));
        }
    return best;
}

std::vector<double> random_kernel(std::mt19937_64& rng, int k)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(static_cast<std::size_t>(k) * k);
    for (auto& x : v) x = u(rng);
    return v;
}

std::filesystem::path temp_file(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / "gmfg_test_graphon";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("sampled interaction matrices")
{
    auto ones = sample_matrix(Graphon::constant(1.0), 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(ones(i, j) == 1.0);

    auto prod = sample_matrix(Graphon::product(), 2);
    CHECK(prod.label(0) == 0.5);
    CHECK(prod.label(1) == 1.0);
    CHECK(prod(0, 0) == doctest::Approx(0.25));
    CHECK(prod(0, 1) == doctest::Approx(0.5));
    CHECK(prod(1, 0) == doctest::Approx(0.5));
    CHECK(prod(1, 1) == doctest::Approx(1.0));

    Graphon blocks(StepGraphon(2, {2, 0, 0, 2}));
    auto bd = sample_matrix(blocks, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(bd(i, j) == ((i < 2) == (j < 2) ? 2.0 : 0.0));

    // round trip: the step graphon of the matrix evaluates to xi on cell interiors
    auto xi = sample_matrix(Graphon::minmax(), 5);
    StepGraphon back = xi.to_step();
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) CHECK(back((i + 0.5) / 5, (j + 0.5) / 5) == xi(i, j));
}

TEST_CASE("step approximation anchors at cell midpoints")
{
    StepGraphon c = step_approximation(Graphon::constant(0.7), 5);
    for (double v : c.values()) CHECK(v == 0.7);

    Graphon sum("sum", [](double u, double v) { return u + v; }, 2.0);
    StepGraphon s = step_approximation(sum, 2);
    CHECK(s.value(0, 0) == doctest::Approx(0.5));
    CHECK(s.value(0, 1) == doctest::Approx(1.0));
    CHECK(s.value(1, 0) == doctest::Approx(1.0));
    CHECK(s.value(1, 1) == doctest::Approx(1.5));
}

TEST_CASE("step approximation error is bounded by the Lipschitz constant")
{
    struct Case {
        Graphon g;
        double lip;
    };
    std::vector<Case> cases = {{Graphon::minmax(), 1.0}, {Graphon::product(), std::sqrt(2.0)}};
    for (const auto& c : cases)
        for (int k : {2, 4, 8, 16, 32}) {
            StepGraphon s = step_approximation(c.g, k);
            double worst = 0.0;
            for (int a = 0; a < 100; ++a)
                for (int b = 0; b < 100; ++b) {
                    double u = (a + 0.37) / 100, v = (b + 0.61) / 100;
                    worst = std::max(worst, std::abs(s(u, v) - c.g(u, v)));
                }
            INFO(c.g.name() << " k=" << k);
            CHECK(worst <= c.lip * std::sqrt(2.0) / k);
        }
}

TEST_CASE("graphon specs and range audit")
{
    CHECK(Graphon::parse("constant:0.5")(0.2, 0.9) == 0.5);
    CHECK(Graphon::parse("product")(0.5, 0.4) == doctest::Approx(0.2));
    CHECK(Graphon::parse("minmax")(0.3, 0.8) == doctest::Approx(0.2));
    Graphon sbm = Graphon::parse("sbm:2:0.5:1.5");
    CHECK(sbm(0.1, 0.2) == 1.5);
    CHECK(sbm(0.1, 0.9) == 0.5);
    CHECK(sbm.e_max() == 1.5);
    CHECK_THROWS_AS(Graphon::parse("lattice:3"), CatalogError);
    CHECK_THROWS_AS(Graphon::parse("constant:abc"), ConfigError);
    CHECK_THROWS_AS(Graphon("negative", [](double, double) { return -0.1; }, 1.0), ContractError);
    CHECK_THROWS_AS(Graphon("too-big", [](double u, double) { return 2.0 * u; }, 1.0), ContractError);
}

TEST_CASE("step graphon csv round trip and malformed files")
{
    StepGraphon s(3, {0.1, 0.2, 0.3, 0.2, 0.5, 0.7, 0.3, 0.7, 1.25});
    auto path = temp_file("g3.csv");
    s.save_csv(path.string());
    StepGraphon back = StepGraphon::load_csv(path.string());
    REQUIRE(back.k() == 3);
    for (std::size_t i = 0; i < 9; ++i) CHECK(back.values()[i] == s.values()[i]);

    auto bad = temp_file("bad.csv");
    {
        std::ofstream out(bad);
        out << "2\n1,0\n0,x\n";
    }
    try {
        StepGraphon::load_csv(bad.string());
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }

    auto spec = "file:" + path.string();
    Graphon g = Graphon::parse(spec);
    REQUIRE(g.step() != nullptr);
    CHECK(g(0.9, 0.9) == 1.25);
}

TEST_CASE("cut norm examples")
{
    CHECK(cut_norm(StepKernel::uniform(3, std::vector<double>(9, 0.0)), CutMode::exact) == 0.0);
    StepKernel t = StepKernel::uniform(2, {0.5, -0.5, -0.5, 0.5});
    CHECK(cut_norm(t, CutMode::exact) == doctest::Approx(0.125).epsilon(1e-14));
    double h = cut_norm(t, CutMode::heuristic);
    CHECK(h >= 0.125 - 1e-12);
    CHECK(h <= cut_norm(t, CutMode::exact) + 1e-15);
    CHECK_THROWS_AS(cut_norm(StepKernel::uniform(13, std::vector<double>(169, 1.0)), CutMode::exact),
                    ContractError);
}

TEST_CASE("exact cut norm matches brute force enumeration")
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        int k = 1 + trial % 6;
        auto v = random_kernel(rng, k);
        CHECK(cut_norm(StepKernel::uniform(k, v), CutMode::exact) == doctest::Approx(brute_cut(k, v)).epsilon(1e-12));
    }
}

TEST_CASE("cut norm is symmetric in sign")
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto v = random_kernel(rng, 6);
        auto w = v;
        for (auto& x : w) x = -x;
        CHECK(cut_norm(StepKernel::uniform(6, v), CutMode::exact) ==
              doctest::Approx(cut_norm(StepKernel::uniform(6, w), CutMode::exact)).epsilon(1e-14));
    }
}

TEST_CASE("heuristic cut norm is a tight lower bound")
{
    std::mt19937_64 rng(99);
    int tight = 0;
    const int trials = 200;
    for (int trial = 0; trial < trials; ++trial) {
        int k = 2 + trial % 11;
        auto v = random_kernel(rng, k);
        StepKernel t = StepKernel::uniform(k, v);
        double e = cut_norm(t, CutMode::exact);
        double h = cut_norm(t, CutMode::heuristic, 1000 + static_cast<std::uint64_t>(trial));
        CHECK(h <= e + 1e-12);
        if (e - h <= 1e-9) ++tight;
    }
    CHECK(tight >= 95 * trials / 100);
}

TEST_CASE("cut convergence metric")
{
    Graphon g(StepGraphon(2, {0.5, 0.2, 0.2, 0.9}));
    CHECK(cut_convergence_metric(*g.step(), g).value == doctest::Approx(0.0).epsilon(1e-14));

    // constant shift by 1/n on a constant graphon, identity map
    std::vector<TestMap> id = {{"identity", [](double e) { return e; }}};
    for (int n : {2, 4, 8}) {
        StepGraphon shifted(1, {0.5 + 1.0 / n});
        CutMetric m = cut_convergence_metric(shifted, Graphon::constant(0.5), id);
        CHECK(m.value == doctest::Approx(1.0 / n).epsilon(1e-12));
    }
    // the default family reports which map attains the max
    CutMetric m = cut_convergence_metric(StepGraphon(1, {0.75}), Graphon::constant(0.5));
    CHECK(m.attained_by == "identity");
    CHECK(m.per_map.size() == default_test_family().size());

    // sample-matrix step graphons of uv approach uv
    double prev = 1e9;
    for (int n : {4, 16, 64}) {
        double v = cut_convergence_metric(sample_matrix(Graphon::product(), n).to_step(), Graphon::product()).value;
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("step approximations converge in the cut metric as k doubles")
{
    for (const Graphon& g : {Graphon::product(), Graphon::minmax()}) {
        double prev = 1e9;
        for (int k : {2, 4, 8, 16}) {
            double v = cut_convergence_metric(step_approximation(g, k), g).value;
            INFO(g.name() << " k=" << k << " metric=" << v);
            CHECK(v <= prev + 1e-10);
            prev = v;
        }
    }
}

TEST_CASE("graphon-weighted density")
{
    const int nx = 5, K = 2;
    std::vector<double> slice = {0.1, 0.2, 0.4, 0.2, 0.1, 0.3, 0.3, 0.2, 0.1, 0.1};
    std::vector<double> out(slice.size());

    weighted_density(LabelCoupling(Graphon::constant(1.0), K), slice, nx, out);
    for (int k = 0; k < K; ++k)
        for (int j = 0; j < nx; ++j) CHECK(out[k * nx + j] == doctest::Approx(0.5 * (slice[j] + slice[nx + j])));

    weighted_density(LabelCoupling(Graphon::constant(0.0), K), slice, nx, out);
    for (double v : out) CHECK(v == 0.0);

    weighted_density(LabelCoupling(Graphon(StepGraphon(2, {1, 0, 0, 1})), K), slice, nx, out);
    for (int j = 0; j < nx; ++j) {
        CHECK(out[j] == doctest::Approx(0.5 * slice[j]));
        CHECK(out[nx + j] == doctest::Approx(0.5 * slice[nx + j]));
    }

    auto neg = slice;
    neg[3] = -0.01;
    CHECK_THROWS_AS(weighted_density(LabelCoupling(Graphon::constant(1.0), K), neg, nx, out), ContractError);
}

TEST_CASE("weighted density is linear and bounded")
{
    LabelCoupling c(Graphon::minmax(), 4);
    const int nx = 7;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(28), q(28), mix(28), op(28), oq(28), omix(28);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = u(rng);
        q[i] = u(rng);
        mix[i] = 0.3 * p[i] + 1.7 * q[i];
    }
    weighted_density(c, p, nx, op);
    weighted_density(c, q, nx, oq);
    weighted_density(c, mix, nx, omix);
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(std::abs(omix[i] - (0.3 * op[i] + 1.7 * oq[i])) <= 1e-12);
        int j = static_cast<int>(i) % nx;
        double avg = 0.0;
        for (int l = 0; l < 4; ++l) avg += 0.25 * p[l * nx + j];
        CHECK(op[i] <= c.e_max() * avg + 1e-15);
    }
}

TEST_CASE("environment statistics")
{
    // particle form
    std::vector<double> row = {1.0, 3.0}, pos = {0.0, 1.0};
    EnvStats r = env_law_stats(row, pos);
    CHECK(r.w0 == doctest::Approx(2.0));
    CHECK(r.wmean == doctest::Approx(1.5));
    CHECK(r.mean == doctest::Approx(0.5));
    CHECK(r.wsecond == doctest::Approx(1.5));

    std::vector<double> zero = {0.0, 0.0};
    EnvStats z = env_law_stats(zero, pos);
    CHECK(z.w0 == 0.0);
    CHECK(z.wmean == 0.0);
    CHECK(z.wsecond == 0.0);
    CHECK(z.mean == doctest::Approx(0.5));

    // grid form: all mass in the cell centered at x = 2
    const int nx = 8;
    const double dx = 0.5;
    std::vector<double> slice(nx, 0.0);
    std::vector<double> xs = {-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0};
    slice[7] = 1.0 / dx;
    EnvStats d = env_law_stats(LabelCoupling(Graphon::constant(1.0), 1), slice, xs, dx, 0);
    CHECK(d.w0 == doctest::Approx(1.0));
    CHECK(d.wmean == doctest::Approx(2.0));
    CHECK(d.mean == doctest::Approx(2.0));
    CHECK(d.wsecond == doctest::Approx(4.0));
}

TEST_CASE("grid and particle environment statistics agree")
{
    // discrete law on cell centers per label class, sampled with 1e6 particles
    const int K = 2, nx = 40;
    const double dx = 0.2;
    std::vector<double> xs(nx), slice(static_cast<std::size_t>(K) * nx);
    for (int j = 0; j < nx; ++j) xs[j] = -4.0 + (j + 0.5) * dx;
    for (int k = 0; k < K; ++k) {
        double mu = k == 0 ? -0.5 : 1.0, total = 0.0;
        for (int j = 0; j < nx; ++j) total += slice[k * nx + j] = std::exp(-0.5 * (xs[j] - mu) * (xs[j] - mu));
        for (int j = 0; j < nx; ++j) slice[k * nx + j] /= total * dx;
    }
    Graphon g = Graphon::sbm(2, 0.5, 1.5);
    LabelCoupling c(g, K);

    const int n = 1000000;
    NoiseStream stream(42, 0);
    std::vector<double> pos(n), row0(n), row1(n);
    for (int i = 0; i < n; ++i) {
        int k = i < n / 2 ? 0 : 1;
        double u = stream.uniform(static_cast<std::uint64_t>(i), 0), acc = 0.0;
        int j = 0;
        for (; j < nx - 1; ++j) {
            acc += slice[k * nx + j] * dx;
            if (u < acc) break;
        }
        pos[i] = xs[j];
        row0[i] = g(c.label(0), c.label(k));
        row1[i] = g(c.label(1), c.label(k));
    }
    // tolerance per statistic: 3 standard errors of the per-particle summand
    auto band = [n](const std::vector<double>& q) {
        double m = 0.0, s2 = 0.0;
        for (double v : q) m += v;
        m /= n;
        for (double v : q) s2 += (v - m) * (v - m);
        return 3.0 * std::sqrt(s2 / (n - 1)) / std::sqrt(static_cast<double>(n));
    };
    for (int k = 0; k < K; ++k) {
        const auto& row = k == 0 ? row0 : row1;
        EnvStats grid = env_law_stats(c, slice, xs, dx, k);
        EnvStats part = env_law_stats(row, pos);
        std::vector<double> a(n), b(n), d(n);
        for (int i = 0; i < n; ++i) {
            a[i] = pos[i];
            b[i] = row[i] * pos[i];
            d[i] = row[i] * pos[i] * pos[i];
        }
        CHECK(std::abs(grid.w0 - part.w0) <= 1e-12);
        CHECK(std::abs(grid.mean - part.mean) <= band(a));
        CHECK(std::abs(grid.wmean - part.wmean) <= band(b));
        CHECK(std::abs(grid.wsecond - part.wsecond) <= band(d));
    }
}
