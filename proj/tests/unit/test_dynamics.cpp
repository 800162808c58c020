#include "helpers.hpp"

#include <catch_amalgamated.hpp>

using namespace lamina;
using namespace testkit;
using Catch::Approx;

TEST_CASE("bump profile peaks at one and vanishes off its support") {
    CHECK(Bump::value(0.0) == 1.0);
    CHECK(Bump::value(1.0) == 0.0);
    CHECK(Bump::value(-1.5) == 0.0);
    CHECK(Bump::d1(0.0) == 0.0);
    for (double s : {-0.9, -0.4, 0.1, 0.7}) {
        const double h = 1e-6;
        CHECK(Bump::d1(s) == Approx((Bump::value(s + h) - Bump::value(s - h)) / (2 * h)).epsilon(1e-6));
        CHECK(Bump::d2(s) == Approx((Bump::d1(s + h) - Bump::d1(s - h)) / (2 * h)).epsilon(1e-5));
    }
    CHECK(Bump::step(-0.1) == 0.0);
    CHECK(Bump::step(1.2) == 1.0);
    CHECK(Bump::step(0.5) == Approx(0.5));
}

TEST_CASE("polynomial product evaluates coordinatewise") {
    const auto f = product_map(quad_map_1d(), quad_map_1d());
    const Vec y = eval_map(f, v2(0.5, -1.5));
    CHECK(y[0] == -0.75);
    CHECK(y[1] == 1.25);
    const Mat D = eval_differential(f, v2(0.5, -1.5));
    CHECK(D(0, 0) == 1.0);
    CHECK(D(1, 1) == -3.0);
    CHECK(D(0, 1) == 0.0);
}

TEST_CASE("viana map squares the height and raises the angle") {
    const auto f = viana_map(4, -1.0);
    const double th = 0.3;
    const Vec y = eval_map(f, v3(std::cos(th), std::sin(th), 0.5));
    CHECK(y[0] == Approx(std::cos(4 * th)).margin(1e-14));
    CHECK(y[1] == Approx(std::sin(4 * th)).margin(1e-14));
    CHECK(y[2] == Approx(-0.75));
}

TEST_CASE("analytic differentials agree with central differences") {
    std::vector<std::pair<EndomorphismSpec, Vec>> cases;
    const auto q = product_map(quad_map_1d(), quad_map_1d());
    cases.push_back({q, v2(0.3, -0.8)});
    cases.push_back({perturb(q, bump_perturbation(0.01, Vec::Zero(2), Vec::Constant(2, 3.0), Vec::Ones(2))), v2(0.3, -0.8)});
    cases.push_back({viana_map(4, -1.0), v3(0.7, -0.4, 1.1)});
    auto V = make_preset("viana-z2");
    cases.push_back({V.fp, v3(0.2, 0.9, -0.3)});
    auto D = make_preset("doubling-affine");
    cases.push_back({D.fp, v2(1.0, 0.2)});
    for (const auto& [f, x] : cases) CHECK(fd_consistency(f, x, 1e-6) < 1e-6);
}

TEST_CASE("second-order jet coefficients are symmetric halves of the Hessian") {
    auto V = make_preset("viana-z4", 0.01);
    const Vec x = v3(0.5, 0.6, 0.4);
    const Jet j = eval_jet(V.fp, x, 2);
    const double h = 1e-5;
    for (int k = 0; k < 3; ++k) {
        CHECK((j.d2[k] - j.d2[k].transpose()).cwiseAbs().maxCoeff() == 0.0);
        for (int a = 0; a < 3; ++a) {
            Vec xp = x, xm = x;
            xp[a] += h;
            xm[a] -= h;
            const Vec col = (eval_differential(V.fp, xp).row(k) - eval_differential(V.fp, xm).row(k)).transpose() / (2 * h);
            for (int b = 0; b < 3; ++b) CHECK(2.0 * j.d2[k](a, b) == Approx(col[b]).margin(1e-6));
        }
    }
    CHECK_THROWS_AS(eval_jet(V.f, x, 3), UnsupportedOrder);
}

TEST_CASE("zero perturbation leaves the map bitwise unchanged") {
    for (const auto& name : preset_names()) {
        auto P = make_preset(name, 0.0);
        const int n = P.f.dim();
        for (int i = 0; i < 7; ++i) {
            Vec x(n);
            for (int a = 0; a < n; ++a) x[a] = 0.1 * (i + 1) * std::sin(1.3 * a + i);
            const Vec y = eval_map(P.f, x), yp = eval_map(P.fp, x);
            for (int a = 0; a < n; ++a) CHECK(y[a] == yp[a]);
            CHECK((eval_differential(P.f, x) - eval_differential(P.fp, x)).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("bump perturbation is supported in its box and bounded by t") {
    const auto q = product_map(quad_map_1d(), quad_map_1d());
    const auto p = bump_perturbation(0.02, Vec::Zero(2), Vec::Constant(2, 0.5), Vec::Ones(2));
    const auto f = perturb(q, p);
    CHECK(eval_map(f, v2(0.6, 0.0)) == eval_map(q, v2(0.6, 0.0)));
    CHECK(eval_map(f, v2(0.0, -0.51)) == eval_map(q, v2(0.0, -0.51)));
    const Vec d = eval_map(f, v2(0.0, 0.0)) - eval_map(q, v2(0.0, 0.0));
    CHECK(d.norm() == Approx(0.02));
    CHECK(perturbation_c0_bound(p) == 0.02);
    // C1 bound dominates sampled gradients
    double worst = 0.0;
    for (int i = -20; i <= 20; ++i)
        for (int j = -20; j <= 20; ++j) {
            const Vec x = v2(0.025 * i, 0.025 * j);
            worst = std::max(worst, op_norm(eval_differential(f, x) - eval_differential(q, x)));
        }
    CHECK(worst <= perturbation_c1_bound(p));
}

TEST_CASE("circle axes wrap images and differences") {
    const auto f = doubling();
    CHECK(eval_map(f, Vec::Constant(1, 0.75))[0] == 0.5);
    const AmbientSpace amb({Axis::circle(1.0)});
    CHECK(amb.dist(Vec::Constant(1, 0.95), Vec::Constant(1, 0.05)) == Approx(0.1));
    CHECK(amb.wrap(Vec::Constant(1, -0.25))[0] == 0.75);
}
