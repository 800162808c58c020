#include "helpers.hpp"

#include <catch_amalgamated.hpp>

#include <sstream>

using namespace lamina;
using namespace testkit;

namespace {

const double beta = (1.0 + std::sqrt(5.0)) / 2.0;

ConfinementParams params(double tube, double eta = 0.001, int horizon = 64, double grid = 1.0 / 1024) {
    ConfinementParams p;
    p.tube = tube;
    p.eta = eta;
    p.horizon = horizon;
    p.grid = grid;
    return p;
}

}  // namespace

TEST_CASE("exit time next to beta for x^2 - 1") {
    const auto s = single_point(beta, 0.1);
    const auto f = quad_map_1d();
    const auto t = exit_time_table(s, 0, f, {Vec::Constant(1, beta - 0.01)}, params(0.1));
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].exit_time == 2);
    // on X itself the chain never has to leave
    CHECK(exit_time_table(s, 0, f, {Vec::Constant(1, beta)}, params(0.1)).rows[0].exit_time == -1);
}

TEST_CASE("exit time on the doubling circle follows powers of two") {
    const auto s = single_point(0.0, 0.1, true);
    const auto t = exit_time_table(s, 0, doubling(), {Vec::Constant(1, 0.004)}, params(0.1));
    CHECK(t.rows[0].exit_time == 5);
}

TEST_CASE("exit times decrease by at most one along the map") {
    const auto s = single_point(beta, 0.1);
    const auto f = quad_map_1d();
    const auto p = params(0.1, 0.0);
    for (double off : {-0.05, -0.02, -0.007, 0.003, 0.04}) {
        const Vec x = Vec::Constant(1, beta + off);
        const int tx = exit_time_table(s, 0, f, {x}, p).rows[0].exit_time;
        const int tfx = exit_time_table(s, 0, f, {eval_map(f, x)}, p).rows[0].exit_time;
        if (tfx > 0) CHECK(tx <= tfx + 1);
    }
}

TEST_CASE("repelling fixed point is confined, attracting one is not") {
    CHECK(confinement_check(single_point(beta, 0.05), 0, quad_map_1d(), params(0.05)).confined);
    const auto half = linear_diag({0.5});
    const auto v = confinement_check(single_point(0.0, 0.05), 0, half, params(0.05, 0.001, 32));
    CHECK_FALSE(v.confined);
    CHECK(v.witness.has_value());
}

TEST_CASE("smaller fattening never breaks confinement") {
    const auto s = single_point(beta, 0.05);
    for (double eta : {0.002, 0.001, 0.0005})
        CHECK(confinement_check(s, 0, quad_map_1d(), params(0.05, eta, 32)).confined);
}

TEST_CASE("viana side tube confines radially") {
    auto P = make_preset("viana-z4");
    auto p = params(0.05, 0.001, 64, 1.0 / 64);
    CHECK(confinement_check(P.s, 1, P.f, p).confined);
}

TEST_CASE("pseudo-orbits respecting points and leaves") {
    const auto s = doubling_grid(64, 0.05);
    const auto f = doubling();
    std::vector<Vec> orbit{Vec::Constant(1, 3.0 / 64)};
    for (int k = 0; k < 8; ++k) orbit.push_back(eval_map(f, orbit.back()));
    CHECK(is_pseudo_orbit(orbit, f, s, 0, 1e-9).valid);
    auto off = orbit;
    off[1][0] += 0.001;
    const auto bad = is_pseudo_orbit(off, f, s, 0, 0.1);
    CHECK_FALSE(bad.valid);
    CHECK(bad.first_violation == 0);

    auto V = make_preset("viana-z4");
    std::vector<Vec> drift{v3(1.0, 0.0, -1.0)};
    for (int k = 0; k < 6; ++k) {
        Vec y = eval_map(V.f, drift.back());
        y[2] += 0.05;
        drift.push_back(y);
    }
    CHECK(is_pseudo_orbit(drift, V.f, V.s, 1, 0.1).valid);
}

TEST_CASE("doubling map is plaque expansive at grid scale") {
    const auto s = doubling_grid(1024, 0.05);
    const auto r = expansiveness_search(s, 0, doubling(), 0.1, 12);
    CHECK_FALSE(r.found);
    CHECK(r.pairs_checked > 1024);
}

TEST_CASE("identity map shadows everything") {
    const auto s = doubling_grid(1024, 0.05);
    const auto id = poly_product("identity", AmbientSpace({Axis::circle(1.0)}), {{0.0, 1.0}});
    const auto r = expansiveness_search(s, 0, id, 0.1, 12);
    REQUIRE(r.found);
    // least pair in sample order
    CHECK(r.a.plaque == 0);
    CHECK(r.b.plaque == 1);
}

TEST_CASE("exit time csv marks infinite entries") {
    ExitTimeTable t;
    t.rows.push_back({Vec::Constant(1, 0.5), 3});
    t.rows.push_back({Vec::Constant(1, -0.0), -1});
    std::ostringstream os;
    write_exit_time_csv(os, t);
    CHECK(os.str() == "x_0,exit_time\n0.5,3\n0,inf\n");
}
