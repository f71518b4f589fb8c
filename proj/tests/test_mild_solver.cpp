#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "spdelab/mild_solver.hpp"

using namespace spdelab;
using Catch::Approx;
using V = ExprVar;

namespace {

std::shared_ptr<const SemigroupEvaluator> heat_ev(std::size_t m) {
    return std::make_shared<const SemigroupEvaluator>(
        assemble_divergence_form(SpatialGrid(0.0, 1.0, m, 2.0), CoefficientField::constant(1.0)));
}

}  // namespace

TEST_CASE("Lipschitz audit accepts bounded slopes and names the hypothesis", "[mild_solver]") {
    const auto ok = audit_lipschitz(Expression::parse("u/(1+abs(u))", {V::u}), 1.0, 1.0, "(F1)", {});
    REQUIRE(ok.passed);
    REQUIRE(ok.lipschitz_base == Approx(1.0).epsilon(1e-3));
    const auto steep = audit_lipschitz(Expression::parse("3*sin(u)", {V::u}), 2.0, 5.0, "(G1)", {});
    REQUIRE_FALSE(steep.passed);
    REQUIRE(steep.message.rfind("(G1)", 0) == 0);
    const auto quad = audit_lipschitz(Expression::parse("u*abs(u)", {V::u}), 1e6, 1e6, "(F1)", {});
    REQUIRE_FALSE(quad.passed);
    REQUIRE(quad.message.find("not Lipschitz") != std::string::npos);
    const auto growth = audit_lipschitz(Expression::parse("u + 5", {V::u}), 1.0, 2.0, "(F1)", {});
    REQUIRE_FALSE(growth.passed);
}

TEST_CASE("Nemytskii operators act pointwise", "[mild_solver]") {
    const SpatialGrid grid(0.0, 1.0, 3, 2.0);
    NonlinearityF F{Expression::parse("x*u", {V::x, V::u}), 1.0, 1.0};
    Vector u(3);
    u << 1.0, 2.0, 3.0;
    const Vector f = F.apply(grid, u);
    REQUIRE(f[0] == Approx(0.25));
    REQUIRE(f[2] == Approx(2.25));
    NonlinearityG G{{Expression::parse("1", {}), Expression::parse("u", {V::u})}, 1.0, 1.0};
    const Matrix g = G.apply(grid, u);
    REQUIRE(g.rows() == 3);
    REQUIRE(g.cols() == 2);
    REQUIRE(g(1, 1) == 2.0);
    Vector dw(2), out(3);
    dw << 0.5, 0.0;
    G.apply_increment(grid, u, dw, out);
    REQUIRE(out == Vector::Constant(3, 0.5));
}

TEST_CASE("Euler step reproduces a hand-rolled recursion", "[mild_solver]") {
    const auto ev = heat_ev(6);
    const SpatialGrid& grid = ev->generator().grid();
    NonlinearityF F{Expression::parse("sin(u)", {V::u}), 1.0, 1.0};
    NonlinearityG G{{Expression::parse("0.3*cos(u)", {V::u})}, 0.3, 0.3};
    const auto path = sample_path(TimeGrid(0.2, 20), 1, 8, 2);
    Vector xi = Vector::LinSpaced(6, 0.1, 0.6);
    const auto X = solve_exponential_euler(*ev, F, G, xi, path);
    const Matrix S = oracle::taylor_expm(ev->generator().matrix(), 0.01);
    Vector x = xi;
    for (std::size_t m = 0; m < 20; ++m) {
        Vector y = x;
        for (Eigen::Index i = 0; i < 6; ++i) y[i] += 0.01 * std::sin(x[i]) + 0.3 * std::cos(x[i]) * path.increments()(m, 0);
        x = S * y;
        REQUIRE((X.at(m + 1) - x).cwiseAbs().maxCoeff() < 1e-10);
    }
    (void)grid;
}

TEST_CASE("solver aborts with the failing step", "[mild_solver]") {
    const auto ev = std::make_shared<const SemigroupEvaluator>(
        SectorialGenerator(SpatialGrid(0.0, 1.0, 1, 2.0), Matrix::Zero(1, 1), SectorBound{1.0, 0.0}));
    NonlinearityF F{Expression::parse("exp(u)", {V::u}), 1.0, 1.0};
    try {
        (void)solve_exponential_euler(*ev, F, NonlinearityG::zero(1), Vector::Constant(1, 5.0), sample_path(TimeGrid(10.0, 10), 1, 0, 0));
        FAIL("expected an abort");
    } catch (const SolverAbort& e) {
        REQUIRE(e.step() >= 1);
    }
}

TEST_CASE("input shapes are checked", "[mild_solver]") {
    const auto ev = heat_ev(4);
    const auto path = sample_path(TimeGrid(0.1, 4), 2, 0, 0);
    REQUIRE_THROWS_AS(solve_exponential_euler(*ev, NonlinearityF::zero(), NonlinearityG::zero(1), Vector::Zero(4), path),
                      ValidationError);
    REQUIRE_THROWS_AS(solve_exponential_euler(*ev, NonlinearityF::zero(), NonlinearityG::zero(2), Vector::Zero(3), path),
                      ValidationError);
}

TEST_CASE("Picard left-point rule is the Euler fixed point", "[mild_solver]") {
    const auto ev = heat_ev(8);
    NonlinearityF F{Expression::parse("u/(1+abs(u))", {V::u}), 1.0, 1.0};
    NonlinearityG G{{Expression::parse("0.5*sin(u)", {V::u})}, 0.5, 0.5};
    const auto path = sample_path(TimeGrid(0.5, 64), 1, 4, 0);
    const Vector xi = Vector::Ones(8);
    const auto pic = picard_solve(*ev, F, G, xi, path, PicardOptions{100, 1e-13});
    REQUIRE(pic.converged);
    REQUIRE(sup_increment(pic.process, solve_exponential_euler(*ev, F, G, xi, path)) < 1e-11);
}

TEST_CASE("Picard reports divergence on long horizons", "[mild_solver]") {
    const auto ev = std::make_shared<const SemigroupEvaluator>(
        SectorialGenerator(SpatialGrid(0.0, 1.0, 1, 2.0), Matrix::Zero(1, 1), SectorBound{1.0, 0.0}));
    NonlinearityF F{Expression::parse("20*u", {V::u}), 20.0, 20.0};
    REQUIRE_THROWS_AS(picard_solve(*ev, F, NonlinearityG::zero(1), Vector::Ones(1), sample_path(TimeGrid(5.0, 50), 1, 0, 0)),
                      PicardDivergence);
}

TEST_CASE("coupled solves share one path", "[mild_solver]") {
    const auto ev = heat_ev(4);
    NonlinearityG G{{Expression::parse("1", {})}, 0.0, 1.0};
    InitialDatum xi{Expression::parse("x", {V::x})};
    ProblemData a{ev, NonlinearityF::zero(), G, xi};
    ProblemData b{ev, NonlinearityF::zero(), G, xi};
    const auto [X, Y] = solve_coupled(a, b, sample_path(TimeGrid(0.1, 10), 1, 0, 3));
    REQUIRE(X.values() == Y.values());
}

TEST_CASE("trajectory CSV layout", "[mild_solver]") {
    const auto ev = heat_ev(2);
    const auto X = solve_exponential_euler(*ev, NonlinearityF::zero(), NonlinearityG::zero(1), Vector::Ones(2),
                                           sample_path(TimeGrid(1.0, 2), 1, 0, 0));
    std::ostringstream os;
    write_trajectory_csv(os, X);
    const std::string s = os.str();
    REQUIRE(s.rfind("t,x_1,x_2\n0,1,1\n0.5,", 0) == 0);
    REQUIRE(std::count(s.begin(), s.end(), '\n') == 4);
}
