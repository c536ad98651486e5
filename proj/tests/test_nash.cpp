#include <cmath>
#include <vector>

#include "doctest.h"
#include "gmfg/error.hpp"
#include "gmfg/nash.hpp"

using namespace gmfg;

namespace {

Grids coarse(int labels = 1)
{
    Grids g;
    g.nt = 50;
    g.nx = 120;
    g.labels = labels;
    return g;
}

MFGSolution constant_solution(const Grids& g, double a)
{
    MFGSolution s;
    s.grids = g;
    s.feedback = FeedbackControl::constant(g, a);
    s.initial = gaussian_initial(g, 0.0, 1.0);
    s.flow = constant_flow(g, s.initial);
    return s;
}

ExploitabilityOptions small_options()
{
    ExploitabilityOptions o;
    o.reps = 16;
    o.deviators = 4;
    o.seed = 3;
    o.sim = SimulationSpec{1.0, 50, 50, 1};
    return o;
}

} // namespace

TEST_CASE("label cells and deviator indices")
{
    CHECK(label_cell(0, 4, 2) == 0);
    CHECK(label_cell(1, 4, 2) == 0);
    CHECK(label_cell(2, 4, 2) == 1);
    CHECK(label_cell(3, 4, 2) == 1);
    for (int i = 0; i < 7; ++i) CHECK(label_cell(i, 7, 1) == 0);
    CHECK(label_cell(99, 100, 8) == 7);

    CHECK(deviator_indices(10, 4) == std::vector<int>{1, 3, 6, 8});
    CHECK(deviator_indices(3, 16) == std::vector<int>{0, 1, 2});
    CHECK_THROWS_AS(parse_exploit_method("best-guess"), CatalogError);
    CHECK(parse_exploit_method("deviation-grid") == ExploitMethod::deviation_grid);
}

TEST_CASE("profile construction")
{
    ControlSet box = ControlSet::interval(-2.0, 2.0);

    // K = 1: every player shares the single rule
    MFGSolution one = constant_solution(coarse(1), 0.0);
    for (int i = 0; i <= one.grids.nt; ++i)
        for (int j = 0; j < one.grids.nx; ++j) one.feedback.strict.at(i, 0, j) = std::tanh(one.grids.x(j)) - one.grids.t(i);
    Profile p = construct_profile(one, 9, box);
    REQUIRE(p.size() == 9);
    for (double t : {0.0, 0.33, 0.9})
        for (double x : {-1.2, 0.1, 2.5})
            for (int i = 1; i < 9; ++i) CHECK(p.control(i, t, x) == p.control(0, t, x));

    // two classes, n = 4: players 1-2 follow class 1, players 3-4 class 2
    MFGSolution two = constant_solution(coarse(2), 0.0);
    for (int i = 0; i <= two.grids.nt; ++i)
        for (int j = 0; j < two.grids.nx; ++j) {
            two.feedback.strict.at(i, 0, j) = 0.7;
            two.feedback.strict.at(i, 1, j) = -0.3;
        }
    Profile q = construct_profile(two, 4, box);
    CHECK(q.control(0, 0.5, 0.0) == doctest::Approx(0.7));
    CHECK(q.control(1, 0.5, 0.0) == doctest::Approx(0.7));
    CHECK(q.control(2, 0.5, 0.0) == doctest::Approx(-0.3));
    CHECK(q.control(3, 0.5, 0.0) == doctest::Approx(-0.3));

    // constant feedback: constant profile, shifted and clamped
    Profile c = construct_profile(constant_solution(coarse(3), 1.25), 12, box, 0.5);
    for (int i = 0; i < 12; ++i)
        for (double x : {-10.0, 0.0, 10.0}) CHECK(c.control(i, 0.7, x) == doctest::Approx(1.75));
    Profile d = construct_profile(constant_solution(coarse(3), 1.25), 12, box, 1.0);
    CHECK(d.control(5, 0.2, 0.0) == 2.0);
}

TEST_CASE("common random numbers make a zero deviation exactly zero")
{
    ModelSpec m = make_builtin_model("kinetic-bounded");
    MFGSolution s = constant_solution(coarse(1), 0.2);
    const int n = 20;
    SystemTemplate tmpl{sample_matrix(Graphon::minmax(), n), KernelSpec::scheduled(KernelFamily::triangle, n),
                        std::make_shared<const InitialLaw>(s.grids, s.initial)};
    Profile base = construct_profile(s, n, m.control_set);
    Profile same = base;
    SimulationSpec spec{1.0, 40, 40, 1};
    auto a = payoff_samples(m, tmpl, base, 6, 17, spec);
    auto b = payoff_samples(m, tmpl, same, 6, 17, spec);
    CHECK(a == b);
}

TEST_CASE("decoupled model: the mean-field feedback cannot be improved on")
{
    ModelSpec m = make_builtin_model("lq-congestion", {{"c_p", 0.0}, {"c_s", 0.0}});
    Grids g = coarse(1);
    SolverOptions o;
    o.damping = 1.0;
    auto sol = mfg_fixed_point(m, Graphon::constant(1.0), g, gaussian_initial(g, 0.0, 1.0), o);
    REQUIRE(sol.converged);
    auto rep = exploitability(m, Graphon::constant(1.0), sol, 20, ExploitMethod::mean_field_br, small_options());
    REQUIRE(rep.players.size() == 4);
    for (const auto& pd : rep.players) {
        CHECK(pd.delta == 0.0);
        CHECK(pd.variant == "best-response");
    }
    CHECK(rep.average == 0.0);
}

TEST_CASE("a perturbed profile is detected and both deviation classes agree")
{
    ModelSpec m = make_builtin_model("lq-congestion", {{"c_p", 0.0}, {"c_s", 0.0}});
    Grids g = coarse(1);
    SolverOptions o;
    o.damping = 1.0;
    auto sol = mfg_fixed_point(m, Graphon::constant(1.0), g, gaussian_initial(g, 0.0, 1.0), o);
    REQUIRE(sol.converged);
    auto opt = small_options();
    opt.profile_shift = 0.5;
    opt.reps = 64;
    opt.deviators = 8;
    auto br = exploitability(m, Graphon::constant(1.0), sol, 20, ExploitMethod::mean_field_br, opt);
    INFO("mean-field-BR delta " << br.average << " +- " << br.average_se);
    CHECK(br.average > 3.0 * br.average_se);
    CHECK(br.average > 0.0);

    // lower-bound coherence: the parametric family never beats the best response by more than 3 se
    auto grid = exploitability(m, Graphon::constant(1.0), sol, 20, ExploitMethod::deviation_grid, opt);
    REQUIRE(grid.players.size() == br.players.size());
    for (std::size_t k = 0; k < br.players.size(); ++k) {
        const auto& a = grid.players[k];
        const auto& b = br.players[k];
        INFO("player " << a.player << ": grid " << a.delta << " (" << a.variant << "), BR " << b.delta);
        CHECK(a.delta <= b.delta + 3.0 * std::hypot(a.se, b.se));
        CHECK(a.delta > 0.0);
    }
}

TEST_CASE("monotonicity of the quadratic coupling")
{
    ModelSpec m = make_builtin_model("monotone");
    const double c = m.params.at("c");
    Grids g = coarse(1);
    g.nt = 20;
    g.nx = 80;
    LabelCoupling one(Graphon::constant(1.0), 1);
    auto a = randomized_flow(m, one, g, 5, 1);
    auto b = randomized_flow(m, one, g, 5, 2);
    CHECK(monotonicity_value(m, one, a, a) == 0.0);

    // G = 1, K = 1: the terminal cost ignores the population, so only
    // -c dt sum_{t < T} sum_x (p - p')^2 dx remains
    double hand = 0.0;
    for (int i = 0; i < g.nt; ++i)
        for (int j = 0; j < g.nx; ++j) {
            double d = a.at(i, 0, j) - b.at(i, 0, j);
            hand += -c * g.dt() * d * d * g.dx();
        }
    double v = monotonicity_value(m, one, a, b);
    CHECK(v < 0.0);
    CHECK(std::abs(v - hand) <= 1e-10);
}

TEST_CASE("random flow pairs certify the monotone model on a positive-definite graphon")
{
    ModelSpec m = make_builtin_model("monotone");
    Graphon G = Graphon::sbm(2, 0.5, 1.5);
    Grids g = coarse(2);
    g.nt = 20;
    g.nx = 80;
    LabelCoupling c(G, 2);
    std::vector<std::pair<DensityFlow, DensityFlow>> pairs;
    for (std::uint64_t p = 0; p < 100; ++p)
        pairs.emplace_back(randomized_flow(m, c, g, 9, 2 * p), randomized_flow(m, c, g, 9, 2 * p + 1));
    std::vector<double> values;
    double worst = monotonicity_check(m, G, pairs, &values);
    CHECK(values.size() == 100);
    CHECK(worst <= 1e-10);

    // flipping the sign of the coupling breaks monotonicity on some pair
    ModelSpec anti = m;
    anti.separated->coupling = [c0 = m.params.at("c")](double, double, double p, const EnvStats&) { return c0 * p; };
    CHECK(monotonicity_check(anti, G, pairs) > 0.0);

    // randomized flows are reproducible and carry unit mass per label
    auto again = randomized_flow(m, c, g, 9, 0);
    CHECK(again.data == pairs[0].first.data);
    for (int k = 0; k < 2; ++k) {
        double mass = 0.0;
        for (double p : again.row(g.nt, k)) mass += p * g.dx();
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("monotonicity needs a separated form")
{
    ModelSpec lq = make_builtin_model("lq-congestion");
    Grids g = coarse(1);
    g.nt = 5;
    g.nx = 40;
    LabelCoupling c(Graphon::constant(1.0), 1);
    DensityFlow f = constant_flow(g, gaussian_initial(g, 0.0, 1.0));
    CHECK_THROWS_AS(monotonicity_check(lq, Graphon::constant(1.0), {{f, f}}), ContractError);
    CHECK_THROWS_AS(monotonicity_value(lq, c, f, f), ContractError);
}
