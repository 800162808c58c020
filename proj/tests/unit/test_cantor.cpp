#include "helpers.hpp"

#include <catch_amalgamated.hpp>

using namespace lamina;
using namespace testkit;
using Catch::Approx;

TEST_CASE("positive fixed point of x^2 - 1 is the golden ratio") {
    CHECK(positive_fixed_point(-1.0) == Approx((1.0 + std::sqrt(5.0)) / 2.0).epsilon(1e-15));
    CHECK_THROWS(positive_fixed_point(0.3));
}

TEST_CASE("sample points of K are forward invariant and avoid the basin seed") {
    const auto k = quad_cantor();
    const auto pts = cantor_points(k, 8);
    // the real slice is countable: two new preimages per level
    REQUIRE(pts.size() == 18);
    CHECK(cantor_points(k, 9).size() == 20);
    CHECK(std::is_sorted(pts.begin(), pts.end()));
    for (double p : pts) {
        CHECK(!k.in_seed(p));
        CHECK(std::abs(p) <= k.beta + 1e-15);
        const double q = k.map(p);
        const bool found = std::any_of(pts.begin(), pts.end(), [&](double a) { return std::abs(a - q) < 1e-12; });
        CHECK(found);
    }
}

TEST_CASE("gap midpoints fall into the attracting 2-cycle") {
    const auto k = quad_cantor();
    const auto gaps = cantor_gaps(k, 8);
    REQUIRE(!gaps.empty());
    for (const auto& g : gaps) {
        double x = 0.5 * (g.lo + g.hi);
        for (int i = 0; i < 400; ++i) x = k.map(x);
        CHECK(std::min(std::abs(x), std::abs(x + 1.0)) < 1e-6);
    }
}

TEST_CASE("cylinders shrink and nest") {
    const auto k4 = julia_cantor(-1.0, 4, {{-0.5, 0.5}}, 2);
    const auto k6 = julia_cantor(-1.0, 6, {{-0.5, 0.5}}, 2);
    CHECK(k6.total_length() < k4.total_length());
    for (const auto& c : k6.cylinders) {
        const Cylinder* outer = k4.find(0.5 * (c.iv.lo + c.iv.hi));
        REQUIRE(outer != nullptr);
        CHECK(outer->iv.lo <= c.iv.lo);
        CHECK(c.iv.hi <= outer->iv.hi);
    }
}

TEST_CASE("a seed that is not mapped into itself is rejected") {
    CHECK_THROWS_AS(julia_cantor(-1.0, 3, {{-0.1, 0.1}}, 1), BasinNotInvariant);
}

TEST_CASE("itinerary records signs along the orbit") {
    const auto k = quad_cantor();
    CHECK(itinerary(k, k.beta, 5) == "+++++");
    CHECK(itinerary(k, -k.beta, 3) == "-++");
}
