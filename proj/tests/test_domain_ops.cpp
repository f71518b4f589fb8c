#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "spdelab/domain_ops.hpp"

using namespace spdelab;
using Catch::Approx;

namespace {

std::shared_ptr<const SectorialGenerator> heat(std::size_t m) {
    return std::make_shared<const SectorialGenerator>(
        assemble_divergence_form(SpatialGrid(0.0, 1.0, m, 2.0), CoefficientField::constant(1.0)));
}

}  // namespace

TEST_CASE("assembly matches the explicit stencil", "[domain_ops]") {
    const auto a = [](double x) { return 1.0 + 0.5 * x; };
    const auto b = [](double x) { return 2.0 * x; };
    CoefficientField c;
    c.a = a;
    c.b = b;
    c.kappa = 0.5;
    c.bound = 3.0;
    const auto g = assemble_divergence_form(SpatialGrid(0.0, 1.0, 12, 2.0), c);
    const auto ref = oracle::stencil(12, 0.0, 1.0, a, b);
    REQUIRE((g.matrix() - ref).cwiseAbs().maxCoeff() < 1e-9);
    REQUIRE_FALSE(g.symmetric());
    REQUIRE(g.sector().M >= 1.0);
}

TEST_CASE("heat spectrum matches the discrete sine eigenvalues", "[domain_ops]") {
    const auto g = heat(20);
    REQUIRE(g->symmetric());
    const auto& ev = g->spectral()->eigenvalues;
    std::vector<double> got(ev.data(), ev.data() + ev.size());
    std::sort(got.begin(), got.end(), std::greater<>());
    for (std::size_t k = 1; k <= 20; ++k) REQUIRE(got[k - 1] == Approx(oracle::laplacian_eigenvalue(k, 20, 1.0)).epsilon(1e-10));
    REQUIRE(g->sector().M <= 1.0 + 1e-8);
}

TEST_CASE("semigroup agrees with a Taylor exponential on both paths", "[domain_ops]") {
    const auto g = heat(10);
    const SemigroupEvaluator eig(g, ExpMethod::eigendecomposition);
    const SemigroupEvaluator pade(g, ExpMethod::pade);
    for (double t : {1e-4, 1e-2, 0.3}) {
        const auto ref = oracle::taylor_expm(g->matrix(), t);
        REQUIRE((eig.matrix(t) - ref).cwiseAbs().maxCoeff() < 1e-10);
        REQUIRE((pade.matrix(t) - ref).cwiseAbs().maxCoeff() < 1e-10);
    }
    REQUIRE(eig.matrix(0.0) == Matrix::Identity(10, 10));
    REQUIRE_THROWS_AS(eig.matrix(-1.0), ValidationError);
}

TEST_CASE("resolvent solves (lambda - A) y = x", "[domain_ops]") {
    const auto g = heat(8);
    Vector x = Vector::LinSpaced(8, -1.0, 2.0);
    const Vector y = resolvent(*g, 1.5, x);
    REQUIRE(((1.5 * Matrix::Identity(8, 8) - g->matrix()) * y - x).norm() < 1e-12);
    const CVector z = resolvent(*g, std::complex<double>(0.5, 3.0), CVector(x.cast<std::complex<double>>()));
    const CMatrix L = std::complex<double>(0.5, 3.0) * CMatrix::Identity(8, 8) - g->matrix().cast<std::complex<double>>();
    REQUIRE((L * z - x.cast<std::complex<double>>()).norm() < 1e-12);
}

TEST_CASE("Yosida approximant of a scalar", "[domain_ops]") {
    const auto g = std::make_shared<const SectorialGenerator>(SpatialGrid(0, 1, 1, 2.0), Matrix::Constant(1, 1, -2.0),
                                                              SectorBound{1.0, 0.0});
    REQUIRE(yosida(*g, 10.0).matrix()(0, 0) == Approx(-5.0 / 3.0).epsilon(1e-14));
    // n^2 / (n + 2) - n
    REQUIRE(yosida(*g, 1000.0).matrix()(0, 0) == Approx(1e6 / 1002.0 - 1000.0).epsilon(1e-12));
}

TEST_CASE("coefficient violations are located", "[domain_ops]") {
    const SpatialGrid grid(0.0, 1.0, 9, 2.0);
    CoefficientField c = CoefficientField::constant(1.0);
    c.a = [](double x) { return x < 0.3 ? 0.1 : 1.0; };
    c.kappa = 0.5;
    c.bound = 2.0;
    const auto v = find_coefficient_violation(grid, c);
    REQUIRE(v);
    REQUIRE(v->kind == CoefficientViolation::Kind::ellipticity);
    REQUIRE_THROWS_AS(assemble_divergence_form(grid, c), ValidationError);
    c.a = [](double) { return 1.0; };
    c.b = [](double) { return 5.0; };
    const auto w = find_coefficient_violation(grid, c);
    REQUIRE(w);
    REQUIRE(w->kind == CoefficientViolation::Kind::bound);
}

TEST_CASE("sub-domain restriction builds a degenerate semigroup", "[domain_ops]") {
    const auto g = heat(15);
    const auto sub = restrict_to_subdomain(*g, 0.25, 0.75);
    // h = 1/16: grid points 4..12, so nodes 4..10 (grid points 5..11) stay active
    REQUIRE(sub.active().size() == 7);
    REQUIRE(sub.degenerate());
    const SemigroupEvaluator ev(sub);
    const Matrix P = sub.mask().asDiagonal();
    REQUIRE(ev.matrix(0.0) == P);
    const Matrix& S = ev.matrix(0.1);
    REQUIRE((S * P - S).cwiseAbs().maxCoeff() == 0.0);
    // active block is the Dirichlet operator of the sub-interval
    const auto ref = oracle::taylor_expm(sub.active_block(), 0.1);
    REQUIRE((sub.gather(Vector(S.col(8))) - ref.col(4)).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE_THROWS_AS(restrict_to_subdomain(*g, 0.5, 0.51), ValidationError);
}

TEST_CASE("Trotter-Kato errors shrink for perturbed coefficients", "[domain_ops]") {
    const SpatialGrid grid(0.0, 1.0, 16, 2.0);
    const auto lim = heat(16);
    auto member = [&](double n) {
        CoefficientField c = CoefficientField::constant(1.0);
        c.a = [n](double x) { return 1.0 + std::sin(n * std::numbers::pi * x) / n; };
        c.kappa = 0.5;
        c.bound = 2.0;
        return std::make_shared<const SectorialGenerator>(assemble_divergence_form(grid, c));
    };
    const std::shared_ptr<const SectorialGenerator> fam[] = {member(8), member(64)};
    const std::vector<Vector> probes{Vector::Ones(16)};
    const double times[] = {0.1, 0.5};
    const auto rows = trotter_kato_check(fam, lim, std::complex<double>(1.0, 0.0), probes, times);
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[1].resolvent_error < rows[0].resolvent_error);
    REQUIRE(rows[1].semigroup_error < rows[0].semigroup_error);
}
