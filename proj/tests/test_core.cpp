#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "spdelab/expression.hpp"
#include "spdelab/grid.hpp"
#include "spdelab/rng.hpp"

using namespace spdelab;
using Catch::Approx;

TEST_CASE("expression arithmetic and precedence", "[expression]") {
    const auto e = Expression::parse("1 + 2*3 - 4/2", {});
    REQUIRE(e(0.0) == Approx(5.0));
    REQUIRE(Expression::parse("-2*-3", {})(0.0) == Approx(6.0));
    REQUIRE(Expression::parse("(1+2)*3", {})(0.0) == Approx(9.0));
    REQUIRE(Expression::parse("2.5e-1", {})(0.0) == Approx(0.25));
}

TEST_CASE("expression functions and variables", "[expression]") {
    using V = ExprVar;
    const auto a = Expression::parse("1 + sin(n*pi*x)/n", {V::x, V::n});
    REQUIRE(a(0.25, 2.0) == Approx(1.0 + std::sin(2.0 * std::numbers::pi * 0.25) / 2.0));
    const auto f = Expression::parse("u/(1+abs(u))", {V::u});
    REQUIRE(f(0.0, 0.0, -3.0) == Approx(-0.75));
    REQUIRE(Expression::parse("max(x, 2) + min(x, -1)", {V::x})(5.0) == Approx(4.0));
    REQUIRE(Expression::parse("exp(0) + cos(0)", {})(0.0) == Approx(2.0));
    REQUIRE(f.uses(V::u));
    REQUIRE_FALSE(f.uses(V::x));
}

TEST_CASE("expression errors cite the position", "[expression]") {
    using V = ExprVar;
    try {
        (void)Expression::parse("1 + * 2", {V::x});
        FAIL("expected a parse error");
    } catch (const ExpressionError& e) {
        REQUIRE(e.position() == 4);
    }
    try {
        (void)Expression::parse("x + u", {V::x});
        FAIL("variable u should be rejected");
    } catch (const ExpressionError& e) {
        REQUIRE(e.position() == 4);
    }
    REQUIRE_THROWS_AS(Expression::parse("foo(1)", {}), ExpressionError);
    REQUIRE_THROWS_AS(Expression::parse("(1", {}), ExpressionError);
    REQUIRE_THROWS_AS(Expression::parse("", {}), ExpressionError);
}

TEST_CASE("philox known-answer vectors", "[rng]") {
    using C = Philox4x32::Counter;
    using K = Philox4x32::Key;
    REQUIRE(Philox4x32::generate(C{0, 0, 0, 0}, K{0, 0}) == C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    REQUIRE(Philox4x32::generate(C{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, K{0xffffffffu, 0xffffffffu}) ==
            C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    REQUIRE(Philox4x32::generate(C{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, K{0xa4093822u, 0x299f31d0u}) ==
            C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("gaussian draws are keyed and roughly standard", "[rng]") {
    REQUIRE(gaussian(1, StreamDomain::brownian, 2, 3, 4) == gaussian(1, StreamDomain::brownian, 2, 3, 4));
    REQUIRE(gaussian(1, StreamDomain::brownian, 2, 3, 4) != gaussian(1, StreamDomain::initial_datum, 2, 3, 4));
    REQUIRE(gaussian(1, StreamDomain::brownian, 2, 3, 4) != gaussian(2, StreamDomain::brownian, 2, 3, 4));
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double g = gaussian(7, StreamDomain::probe, 0, static_cast<std::uint32_t>(i), 0);
        s += g;
        s2 += g * g;
    }
    REQUIRE(std::abs(s / n) < 4.0 / std::sqrt(n));
    REQUIRE(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
    for (int i = 0; i < 1000; ++i) {
        const double u = uniform(3, StreamDomain::probe, 1, static_cast<std::uint32_t>(i), 0);
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("spatial grid layout", "[grid]") {
    const SpatialGrid g(0.0, 1.0, 3, 2.0);
    REQUIRE(g.h() == 0.25);
    REQUIRE(g.node(0) == 0.25);
    REQUIRE(g.node(1) == 0.5);
    REQUIRE(g.node(2) == 0.75);
    REQUIRE(g.weights().sum() == Approx(0.75));
    const SpatialGrid one(0.0, 1.0, 1, 2.0);
    REQUIRE(one.node(0) == 0.5);
    REQUIRE(one.weight(0) == 0.5);
    const SpatialGrid wide(0.0, 2.0, 7, 3.0);
    REQUIRE(wide.h() == 0.25);
    REQUIRE(wide.node(3) == 1.0);
}

TEST_CASE("spatial grid validation", "[grid]") {
    REQUIRE_THROWS_AS(SpatialGrid(0.0, 1.0, 0, 2.0), ValidationError);
    REQUIRE_THROWS_AS(SpatialGrid(0.0, 1.0, 3, 1.0), ValidationError);
    REQUIRE_THROWS_AS(SpatialGrid(1.0, 0.0, 3, 2.0), ValidationError);
    REQUIRE_THROWS_AS(SpatialGrid(0.0, INFINITY, 3, 2.0), ValidationError);
}

TEST_CASE("Lr quadrature norms", "[grid]") {
    const SpatialGrid g(0.0, 1.0, 3, 4.0);
    Vector v(3);
    v << 1.0, -2.0, 0.5;
    const double expect = std::pow(0.25 * (1.0 + 16.0 + 0.0625), 0.25);
    REQUIRE(g.norm(v) == Approx(expect));
    const Vector z = Vector::Zero(3);
    REQUIRE(g.distance({v.data(), 3}, {z.data(), 3}) == Approx(expect));
    REQUIRE(g.norm_r(v, 2.0) == Approx(std::sqrt(0.25 * 5.25)));
}

TEST_CASE("time grid ends exactly at T", "[grid]") {
    const TimeGrid t(0.3, 7);
    REQUIRE(t.node(7) == 0.3);
    REQUIRE(t.node(0) == 0.0);
    for (std::size_t k = 1; k <= 7; ++k) REQUIRE(t.node(k) > t.node(k - 1));
    REQUIRE_THROWS_AS(TimeGrid(0.0, 4), ValidationError);
    REQUIRE_THROWS_AS(TimeGrid(1.0, 0), ValidationError);
}
