#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "agckan/bspline.hpp"
#include "agckan/errors.hpp"
#include "agckan/rng.hpp"
#include "oracles.hpp"

using namespace agckan;

TEST_CASE("order 0 basis is the span indicator", "[bspline]") {
    const auto g = SplineGrid::uniform(0.0, 5.0, 5, 0);
    REQUIRE(g.basis_count() == 5);
    for (double x : {0.0, 0.5, 1.0, 2.99, 3.0, 4.5, 5.0}) {
        const auto b = bspline_basis(x, g);
        const std::size_t span = x == 5.0 ? 4 : static_cast<std::size_t>(std::floor(x));
        for (std::size_t i = 0; i < 5; ++i) CHECK(b[i] == (i == span ? 1.0 : 0.0));
    }
}

TEST_CASE("knots are uniform with exact end points", "[bspline]") {
    const auto g = SplineGrid::uniform(-3.0, 3.0, 5, 3);
    REQUIRE(g.knots.size() == 5 + 2 * 3 + 1);
    CHECK(g.knots[3] == -3.0);
    CHECK(g.knots[8] == 3.0);
    CHECK(g.knots[0] == Catch::Approx(-3.0 - 3 * 1.2));
    CHECK(g.knots == oracle::uniform_knots(-3.0, 3.0, 5, 3));
    CHECK_THROWS_AS(SplineGrid::uniform(1.0, 1.0, 5, 3), InvalidArgument);
    CHECK_THROWS_AS(SplineGrid::uniform(0.0, 1.0, 0, 3), InvalidArgument);
    CHECK_THROWS_AS(SplineGrid::uniform(0.0, 1.0, 5, 9), InvalidArgument);
}

TEST_CASE("partition of unity and nonnegativity inside the grid", "[bspline]") {
    Rng rng(6);
    for (std::size_t k = 0; k <= 4; ++k) {
        for (std::size_t G : {1u, 3u, 5u, 10u}) {
            const auto g = SplineGrid::uniform(-2.0, 1.5, G, k);
            for (int s = 0; s < 500; ++s) {
                const double x = s == 0 ? g.lo : (s == 1 ? g.hi : rng.uniform(g.lo, g.hi));
                const auto b = bspline_basis(x, g);
                double sum = 0.0;
                for (double v : b) {
                    REQUIRE(v >= -1e-15);
                    sum += v;
                }
                REQUIRE(std::abs(sum - 1.0) < 1e-12);
            }
        }
    }
}

TEST_CASE("agrees with the textbook recursion, extrapolation included", "[bspline]") {
    Rng rng(99);
    for (int c = 0; c < 2000; ++c) {
        const std::size_t k = rng.index(5);
        const std::size_t G = 1 + rng.index(12);
        const double lo = rng.uniform(-5.0, 0.0);
        const double hi = lo + rng.uniform(0.1, 8.0);
        const auto g = SplineGrid::uniform(lo, hi, G, k);
        const double x = rng.uniform(lo - 0.5 * (hi - lo), hi + 0.5 * (hi - lo));
        const auto got = bspline_basis(x, g);
        const auto want = oracle::basis(x, lo, hi, G, k);
        for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(std::abs(got[i] - want[i]) < 1e-12);
    }
}

TEST_CASE("local basis derivatives match the recursion", "[bspline]") {
    Rng rng(12);
    const auto g = SplineGrid::uniform(-3.0, 3.0, 5, 3);
    const auto t = oracle::uniform_knots(-3.0, 3.0, 5, 3);
    for (int c = 0; c < 500; ++c) {
        const double x = rng.uniform(-3.0, 3.0);
        const auto b = local_basis(x, g);
        REQUIRE(b.count == 4);
        for (std::size_t r = 0; r < b.count; ++r)
            REQUIRE(std::abs(b.deriv[r] - oracle::cox_de_boor_deriv(b.first + r, 3, x, t, -3.0, 3.0)) <
                    1e-12);
    }
}

TEST_CASE("outside the grid values continue linearly", "[bspline]") {
    const auto g = SplineGrid::uniform(-1.0, 1.0, 4, 3);
    const auto at = bspline_basis(1.0, g);
    const auto d1 = bspline_basis(2.0, g);
    const auto d2 = bspline_basis(3.0, g);
    for (std::size_t i = 0; i < at.size(); ++i)
        CHECK(d2[i] - d1[i] == Catch::Approx(d1[i] - at[i]).margin(1e-12));
}
