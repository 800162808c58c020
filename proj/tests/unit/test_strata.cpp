#include "helpers.hpp"

#include <lamina/interp.hpp>

#include <catch_amalgamated.hpp>

#include <sstream>

using namespace lamina;
using namespace testkit;
using Catch::Approx;

TEST_CASE("preset stratifications satisfy the frontier condition") {
    for (const auto& name : preset_names()) {
        CAPTURE(name);
        auto P = make_preset(name);
        const auto rep = check_frontier_and_coherence(P.s);
        for (const auto& v : rep.violations) UNSCOPED_INFO(v);
        CHECK(rep.pass());
        CHECK(normal_frames(P.s).monotone);
    }
}

TEST_CASE("a broken incidence order is reported") {
    auto s = quad_factor(8);
    s.incidence = {{true, false}, {true, true}};
    const auto rep = check_frontier_and_coherence(s);
    CHECK_FALSE(rep.partial_order);
}

TEST_CASE("product of the quadratic factor has four strata with additive dimensions") {
    const auto a = quad_factor(8);
    const auto s = quad_product_stratification(8);
    REQUIRE(s.size() == 4);
    for (int k = 0; k < 4; ++k) {
        const auto [i, j] = s.factors[k];
        CHECK(s.strata[k].dim == a.strata[i].dim + a.strata[j].dim);
        CHECK(s.samples(k).size() == a.samples(i).size() * a.samples(j).size());
        for (int l = 0; l < 4; ++l) {
            const auto [p, q] = s.factors[l];
            CHECK(s.incidence[k][l] == (a.incidence[i][p] && a.incidence[j][q]));
        }
    }
    // strata are ordered by dimension
    CHECK(s.strata.front().dim == 0);
    CHECK(s.strata.back().dim == 2);
}

TEST_CASE("every sample locates in its own plaque and images are assigned") {
    const auto s = quad_product_stratification(8);
    for (int k = 0; k < s.size(); ++k)
        for (const auto& r : s.samples(k)) {
            CHECK(s.locate(k, s.point(r)) == r.plaque);
            CHECK(s.strata[k].plaques[r.plaque].image >= 0);
        }
    CHECK(s.locate(0, v2(5.0, 5.0)) == -1);
}

TEST_CASE("plaque images follow the map on the K stratum") {
    const auto s = quad_factor(16);
    const auto f = quad_map_1d();
    for (const auto& r : s.samples(0)) {
        const Vec y = eval_map(f, s.point(r));
        const int img = s.strata[0].plaques[r.plaque].image;
        CHECK(std::abs(y[0] - s.strata[0].plaques[img].base[0]) < 1e-12);
    }
}

TEST_CASE("plaque neighbourhoods saturate only when the radius covers the plaque") {
    auto P = make_preset("flat-leaf");
    const SampleRef r{0, 0, 10};
    CHECK_FALSE(plaque_neighborhood(P.s, r, 0.5).saturated);
    CHECK(plaque_neighborhood(P.s, r, 4.0).saturated);
    CHECK_THROWS(plaque_neighborhood(P.s, r, 0.0));
}

TEST_CASE("normal complement of a rank deficient frame is refused") {
    Mat t(3, 2);
    t << 1, 2, 0, 0, 0, 0;
    CHECK_THROWS_AS(orthonormal_complement(t), FrameDegeneracy);
    Mat u(3, 1);
    u << 1, 1, 0;
    const Mat n = orthonormal_complement(u);
    CHECK((n.transpose() * n - Mat::Identity(2, 2)).norm() < 1e-14);
    CHECK((n.transpose() * u).norm() < 1e-14);
}

TEST_CASE("stratification csv is stable and uses 17 digits") {
    const auto s = quad_factor(8);
    std::ostringstream a, b;
    write_stratification_csv(a, s);
    write_stratification_csv(b, s);
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("stratum_id,plaque_code", 0) == 0);
    CHECK(fmt17(0.1) == "0.10000000000000001");
}

TEST_CASE("catmull-rom interpolant reproduces affine data and wraps on circles") {
    LeafBox box;
    box.lo = {0.0, -1.0};
    box.hi = {1.0, 1.0};
    box.count = {6, 5};
    box.periodic = {false, false};
    std::vector<Vec> vals;
    for (int k = 0; k < box.nodes(); ++k) {
        const auto m = box.unflatten(k);
        vals.push_back(Vec::Constant(1, 2.0 * box.coord(0, m[0]) - 3.0 * box.coord(1, m[1]) + 0.5));
    }
    PlaqueInterpolant I{&box, &vals};
    for (double u : {0.0, 0.13, 0.5, 0.99})
        for (double v : {-1.0, -0.3, 0.8}) {
            const auto r = I.eval({u, v});
            CHECK(r.value[0] == Approx(2.0 * u - 3.0 * v + 0.5).margin(1e-13));
            CHECK(r.grad(0, 0) == Approx(2.0).margin(1e-12));
            CHECK(r.grad(0, 1) == Approx(-3.0).margin(1e-12));
        }

    LeafBox ring;
    ring.lo = {0.0};
    ring.hi = {2.0 * M_PI};
    ring.count = {256};
    ring.periodic = {true};
    std::vector<Vec> sv;
    for (int k = 0; k < 256; ++k) sv.push_back(Vec::Constant(1, std::sin(ring.coord(0, k))));
    PlaqueInterpolant J{&ring, &sv};
    CHECK(J.eval({2.0 * M_PI - 0.01}).value[0] == Approx(std::sin(-0.01)).margin(1e-6));
    CHECK(J.eval({0.3}).grad(0, 0) == Approx(std::cos(0.3)).margin(1e-4));
}
