#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "spdelab/gamma_calc.hpp"

using namespace spdelab;
using Catch::Approx;

TEST_CASE("gamma norm at r = 2 is the Hilbert-Schmidt norm", "[gamma]") {
    const SpatialGrid grid(0.0, 2.0, 5, 2.0);
    Matrix X(5, 2);
    X << 1, 0, 2, 1, -1, 3, 0, 0, 0.5, -2;
    const auto e = gamma_norm(FiniteRankOperator::from_images(X), grid);
    double hs = 0.0;
    for (Eigen::Index j = 0; j < 2; ++j) hs += std::pow(oracle::lr_norm(X.col(j), grid.h(), 2.0), 2);
    REQUIRE(e.exact);
    REQUIRE(e.std_error == 0.0);
    REQUIRE(e.value == Approx(std::sqrt(hs)).epsilon(1e-14));
}

TEST_CASE("gamma norm Monte Carlo for rank one at r = 3", "[gamma]") {
    const SpatialGrid grid(0.0, 1.0, 4, 3.0);
    Matrix X(4, 1);
    X << 1, -2, 0.5, 3;
    const auto e = gamma_norm(FiniteRankOperator::from_images(X), grid, 400000, 9);
    // (E|g|^2)^{1/2} ||x||_3 = ||x||_3
    const double exact = oracle::lr_norm(X.col(0), grid.h(), 3.0);
    REQUIRE_FALSE(e.exact);
    REQUIRE(std::abs(e.value - exact) < 4.0 * e.std_error);
    const auto again = gamma_norm(FiniteRankOperator::from_images(X), grid, 400000, 9);
    REQUIRE(again.value == e.value);
}

TEST_CASE("finite-rank operators reject non-orthonormal bases", "[gamma]") {
    Eigen::SparseMatrix<double> basis(2, 2);
    basis.insert(0, 0) = 1.0;
    basis.insert(1, 1) = 2.0;
    REQUIRE_THROWS_AS(FiniteRankOperator(basis, Vector::Ones(2), Matrix::Zero(3, 2)), ValidationError);
    Eigen::SparseMatrix<double> ok(2, 2);
    ok.insert(0, 0) = 1.0;
    ok.insert(1, 1) = 1.0 / std::sqrt(2.0);
    Vector w(2);
    w << 1.0, 2.0;
    REQUIRE_NOTHROW(FiniteRankOperator(ok, w, Matrix::Zero(3, 2)));
}

TEST_CASE("weighted cell masses match midpoint quadrature", "[gamma]") {
    const TimeGrid grid(1.0, 8);
    for (double alpha : {0.0, 0.2, 0.4}) {
        const auto mu = WeightedTimeMeasure::on_grid(grid, 8, alpha);
        REQUIRE(mu.cells() == 8);
        for (std::size_t i = 0; i + 1 < 8; ++i) {
            const double ref = oracle::weight_mass_midpoint(grid.node(i), grid.node(i + 1), 1.0, alpha);
            REQUIRE(mu.node_weights()[i] == Approx(ref).epsilon(1e-6));
        }
        REQUIRE(mu.total_mass() == Approx(mu.exact_mass()).epsilon(1e-12));
    }
    REQUIRE_THROWS_AS(WeightedTimeMeasure::on_grid(grid, 8, 0.5), ValidationError);
    REQUIRE_THROWS_AS(WeightedTimeMeasure({0.0, 0.0}, 0.1), ValidationError);
}

TEST_CASE("kernel representation skips zero-mass cells and keeps the norm", "[gamma]") {
    const SpatialGrid grid(0.0, 1.0, 3, 2.0);
    const WeightedTimeMeasure mu({0.0, 0.25, 1.0}, 0.1);
    std::vector<Matrix> phi{Matrix::Constant(3, 1, 2.0), Matrix::Constant(3, 1, -1.0)};
    const auto R = represent_kernel(phi, mu, 1);
    const double ref = std::sqrt(4.0 * 0.75 * mu.node_weights()[0] + 1.0 * 0.75 * mu.node_weights()[1]);
    REQUIRE(gamma_norm(R, grid).value == Approx(ref).epsilon(1e-12));
}

TEST_CASE("gamma bound upper on a diagonal family", "[gamma]") {
    // ||M(0)|| + int_0^1 ||M'(s)|| ds with ||M'(s)|| = max(e^{-s}, 2 e^{-2s})
    OperatorFamily fam{[](double s) {
                           Matrix M = Matrix::Zero(2, 2);
                           M(0, 0) = std::exp(-s);
                           M(1, 1) = std::exp(-2 * s);
                           return M;
                       },
                       [](double s) {
                           Matrix M = Matrix::Zero(2, 2);
                           M(0, 0) = -std::exp(-s);
                           M(1, 1) = -2 * std::exp(-2 * s);
                           return M;
                       },
                       std::nullopt};
    // 2 e^{-2s} >= e^{-s} iff s <= ln 2
    const double l2 = std::log(2.0);
    const double exact = 1.0 + (1.0 - std::exp(-2 * l2)) + (std::exp(-l2) - std::exp(-1.0));
    REQUIRE(gamma_bound_upper(fam, 0.0, 1.0) == Approx(exact).epsilon(1e-8));
}

TEST_CASE("gamma bound upper resolves an endpoint singularity", "[gamma]") {
    for (double a : {0.1, 0.25, 0.5}) {
        OperatorFamily fam{[a](double s) { return Matrix::Constant(1, 1, std::pow(s, a)); },
                           [a](double s) { return Matrix::Constant(1, 1, a * std::pow(s, a - 1.0)); },
                           Matrix::Zero(1, 1)};
        // int_0^T a s^{a-1} ds = T^a
        REQUIRE(gamma_bound_upper(fam, 0.0, 0.3) == Approx(std::pow(0.3, a)).epsilon(1e-7));
    }
    OperatorFamily bad{[](double s) { return Matrix::Constant(1, 1, std::log(s - 0.2)); },
                       [](double s) { return Matrix::Constant(1, 1, 1.0 / (s - 0.2)); },
                       Matrix::Zero(1, 1)};
    REQUIRE_THROWS_AS(gamma_bound_upper(bad, 0.2, 1.0), NumericError);
}

TEST_CASE("square function against the gamma norm off r = 2", "[gamma]") {
    Matrix X(2, 2);
    X << 1.0, 0.3, 0.5, -1.0;
    const auto op = FiniteRankOperator::from_images(X);
    const SpatialGrid grid(0.0, 1.0, 2, 4.0);
    const double exact = oracle::gamma_norm_2channel(X, grid.h(), 4.0);
    const auto eq = square_function_equivalence(op, grid, 1000000, 17);
    REQUIRE(std::abs(eq.gamma.value - exact) <= 4.0 * eq.gamma.std_error + 1e-4);
    const double sq = std::pow(grid.h() * X.cwiseAbs2().rowwise().sum().array().square().sum(), 0.25);
    REQUIRE(eq.square_function == Approx(sq).epsilon(1e-14));
    REQUIRE(std::abs(eq.relative_gap - std::abs(exact / sq - 1.0)) <= 0.01);
    REQUIRE(eq.within);
    REQUIRE(eq.to_json()["tolerance_label"] == "equivalence-constant tolerance");

    const auto hs = square_function_equivalence(op, SpatialGrid(0.0, 1.0, 2, 2.0));
    REQUIRE(hs.gamma.exact);
    REQUIRE(hs.relative_gap <= 1e-14);
}

TEST_CASE("audit records carry the digest", "[gamma]") {
    const SpatialGrid grid(0.0, 1.0, 2, 2.0);
    const auto op = FiniteRankOperator::from_images(Matrix::Identity(2, 2));
    GammaAuditRecord rec{"gamma_norm", digest_of(op, grid), gamma_norm(op, grid), 0};
    const auto j = rec.to_json();
    REQUIRE(j["op"] == "gamma_norm");
    REQUIRE(j["inputs_digest"].get<std::string>().size() == 16);
    REQUIRE(digest_of(op, grid) != digest_of(op, SpatialGrid(0.0, 1.0, 2, 3.0)));
}
