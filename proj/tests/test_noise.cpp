#include <catch_amalgamated.hpp>

#include <sstream>

#include "spdelab/noise.hpp"

using namespace spdelab;
using Catch::Approx;

TEST_CASE("increments are the keyed gaussians scaled by sqrt(dt)", "[noise]") {
    const TimeGrid grid(0.5, 10);
    const auto p = sample_path(grid, 2, 99, 4);
    for (std::uint32_t m = 0; m < 10; ++m)
        for (std::uint32_t k = 0; k < 2; ++k)
            REQUIRE(p.increments()(m, k) == Approx(std::sqrt(0.05) * gaussian(99, StreamDomain::brownian, 4, m, k)).epsilon(1e-15));
    REQUIRE(p.value_at(0).isZero(0.0));
    REQUIRE(p.value_at(10)[1] == Approx(p.increments().col(1).sum()));
}

TEST_CASE("projection zeroes the trailing channels", "[noise]") {
    const auto p = sample_path(TimeGrid(1.0, 8), 4, 1, 0);
    const auto q = project(p, 2);
    REQUIRE(q.active_channels() == 2);
    REQUIRE(q.channels() == 4);
    REQUIRE(q.increments().leftCols(2) == p.increments().leftCols(2));
    REQUIRE(q.increments().rightCols(2).isZero(0.0));
    REQUIRE_THROWS_AS(project(p, 5), ValidationError);
}

TEST_CASE("coarsening sums blocks of increments", "[noise]") {
    const auto p = sample_path(TimeGrid(1.0, 12), 2, 3, 1);
    const auto c = coarsen(p, 3);
    REQUIRE(c.grid().steps() == 4);
    REQUIRE(c.grid().dt() == Approx(0.25));
    for (Eigen::Index m = 0; m < 4; ++m)
        REQUIRE(c.increments()(m, 1) == Approx(p.increments().block(3 * m, 1, 3, 1).sum()).epsilon(1e-15));
    REQUIRE(c.value_at(4)[0] == Approx(p.value_at(12)[0]));
    REQUIRE_THROWS_AS(coarsen(p, 5), ValidationError);
}

TEST_CASE("prefix keeps the leading steps", "[noise]") {
    const auto p = sample_path(TimeGrid(1.0, 16), 1, 3, 1);
    const auto q = prefix(p, 4);
    REQUIRE(q.grid().steps() == 4);
    REQUIRE(q.grid().T() == Approx(0.25));
    REQUIRE(q.increments() == p.increments().topRows(4));
}

TEST_CASE("path records are 40 bytes and round-trip through streams", "[noise]") {
    const auto p = sample_path(TimeGrid(0.7, 33), 3, 0x1234567890abcdefULL, 77);
    const auto bytes = PathRecord::of(p).encode();
    REQUIRE(bytes.size() == 40);
    std::stringstream ss;
    write_path_record(ss, p);
    REQUIRE(ss.str().size() == 40);
    REQUIRE(read_path_record(ss).bitwise_equal(p));
}

TEST_CASE("pairing with a step function", "[noise]") {
    const auto p = sample_path(TimeGrid(1.0, 4), 2, 5, 0);
    RowMatrix f(4, 2);
    f << 1, 0, 0, 2, -1, 0, 0, 1;
    const double expect = p.increments()(0, 0) + 2 * p.increments()(1, 1) - p.increments()(2, 0) + p.increments()(3, 1);
    REQUIRE(pair_with_step(p, f) == Approx(expect));
    REQUIRE_THROWS_AS(pair_with_step(p, RowMatrix::Zero(3, 2)), ValidationError);
}
