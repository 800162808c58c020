#pragma once

#include "cantor.hpp"
#include "dynamics.hpp"
#include "engine.hpp"
#include "shadowing.hpp"
#include "strata.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace lamina {

struct CertPlan {
    int stratum = 0;
    int n_max = 20;
    int burn_in = 0;
    bool adapted = false;
    bool cone = false;
};

struct ConfinePlan {
    int stratum = 0;
    ConfinementParams params;
};

struct ExpansPlan {
    int stratum = 0;
    double eps = 0.05;
    int horizon = 12;
};

struct Preset {
    std::string name;
    SampledStratification s;
    EndomorphismSpec f;   // unperturbed
    EndomorphismSpec fp;  // perturbed at t
    PerturbationSpec unit;  // the perturbation family at t = 1
    double t = 0.0;
    double eta_prime = 0.05;
    std::vector<CertPlan> certs;
    std::vector<ConfinePlan> confine;
    std::vector<ExpansPlan> expans;

    EndomorphismSpec at(double tt) const {
        PerturbationSpec p = unit;
        p.t = tt;
        return perturb(f, p);
    }
};

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"quad-product", "viana-z4",        "viana-z2", "square-corners",
                                                "doubling-affine", "flat-leaf", "cexp-demo"};
    return names;
}

// The Cantor stratification of x^2 - 1 used by the quadratic product.
inline CantorSet quad_cantor() { return julia_cantor(-1.0, 8, {{-0.5, 0.5}}, 2); }

inline SampledStratification quad_factor(int density = 32) {
    auto s = cantor_stratification(quad_cantor(), 8, density, 0.2);
    s.strata[1].tube_width = 0.08;
    return s;
}

inline EndomorphismSpec quad_map_1d() { return poly_product("x^2-1", AmbientSpace::euclidean(1), {{-1.0, 0.0, 1.0}}); }

inline SampledStratification quad_product_stratification(int density = 32) {
    const auto a = quad_factor(density);
    auto s = build_product_stratification(a, a);
    const auto g = product_map(quad_map_1d(), quad_map_1d());
    assign_images(s, [&](const Vec& x) { return eval_map(g, x); });
    return s;
}

namespace detail {

inline void finish(Preset& P, double t_default, std::optional<double> t, std::optional<double> eta_prime,
                   double eta_default) {
    P.t = t.value_or(t_default);
    P.eta_prime = eta_prime.value_or(eta_default);
    P.fp = P.at(P.t);
}

inline int grid_count(double length, double spacing) { return static_cast<int>(std::lround(length / spacing)) + 1; }

}  // namespace detail

inline Preset quad_product_preset(std::optional<double> t = {}, std::optional<double> eta_prime = {}, int density = 0,
                                  bool separable = false) {
    Preset P;
    P.name = separable ? "quad-product-separable" : "quad-product";
    P.s = quad_product_stratification(density > 0 ? density : 32);
    P.f = product_map(quad_map_1d(), quad_map_1d());
    P.unit = separable ? bump_perturbation(1.0, Vec::Zero(2), Vec::Constant(2, 3.0).cwiseProduct(Vec::Unit(2, 0)),
                                           Vec::Unit(2, 0))
                       : bump_perturbation(1.0, Vec::Zero(2), Vec::Constant(2, 3.0), Vec::Ones(2));
    for (int i = 0; i < 3; ++i) P.certs.push_back({i, i == 0 ? 20 : 32, i == 0 ? 0 : 16, i == 0, i == 0});
    ConfinementParams cp;
    cp.eta = 0.001;
    cp.horizon = 64;
    cp.grid = 1.0 / 128;
    cp.tube = 0.05;
    P.confine.push_back({0, cp});
    P.expans.push_back({0, 0.05, 12});
    detail::finish(P, 0.01, t, eta_prime, 0.05);
    return P;
}

// (z, h) -> (z^k, h^2 + c) on the solid cylinder |z| <= 1, |h| <= beta.
// X0: the circles |z| = 1, h = +-beta (points at 64 angles); X1: the side
// |z| = 1 laminated by vertical segments; X2: the two lids laminated by
// disks; X3: the interior.
inline SampledStratification viana_stratification(int power, double c, int angles = 64, double disk_spacing = 1.0 / 32,
                                                   double box_spacing = 1.0 / 16) {
    const double beta = positive_fixed_point(c);
    SampledStratification s;
    s.ambient = AmbientSpace::euclidean(3);
    const int nh = detail::grid_count(2.0 * beta, box_spacing);
    auto angle_of = [&](int k) { return 2.0 * M_PI * k / angles; };
    const double tol = 1e-12;

    Stratum x0;
    x0.name = "X0";
    x0.dim = 0;
    x0.normal_axes = {0, 1, 2};
    x0.tube_width = 0.2;
    Chart c0{"circles", {}};
    for (int sg : {-1, 1})
        for (int k = 0; k < angles; ++k) {
            Vec b(3);
            b << std::cos(angle_of(k)), std::sin(angle_of(k)), sg * beta;
            c0.plaques.push_back(static_cast<int>(x0.plaques.size()));
            x0.plaques.push_back(point_plaque((sg > 0 ? "+" : "-") + std::to_string(k), b));
        }
    x0.charts.push_back(c0);
    x0.distance = [beta](const Vec& z) {
        const double r = std::hypot(z[0], z[1]);
        return std::hypot(r - 1.0, std::abs(z[2]) - beta);
    };

    Stratum x1;
    x1.name = "X1";
    x1.dim = 1;
    x1.leaf_axes = {2};
    x1.normal_axes = {0, 1};
    x1.tube_width = 0.08;
    Chart c1{"side", {}};
    for (int k = 0; k < angles; ++k) {
        Vec b(3);
        b << std::cos(angle_of(k)), std::sin(angle_of(k)), 0.0;
        c1.plaques.push_back(static_cast<int>(x1.plaques.size()));
        x1.plaques.push_back(interval_plaque("s" + std::to_string(k), b, -beta, beta, nh));
    }
    x1.charts.push_back(c1);
    x1.distance = [beta](const Vec& z) {
        const double r = std::hypot(z[0], z[1]);
        return std::hypot(r - 1.0, std::max(0.0, std::abs(z[2]) - beta));
    };

    Stratum x2;
    x2.name = "X2";
    x2.dim = 2;
    x2.leaf_axes = {0, 1};
    x2.normal_axes = {2};
    x2.tube_width = 0.08;
    const int nd = detail::grid_count(2.0, disk_spacing);
    Chart c2{"lids", {}};
    for (int sg : {-1, 1}) {
        Plaque pl;
        pl.code = sg > 0 ? "lid+" : "lid-";
        pl.base = Vec::Zero(3);
        pl.base[2] = sg * beta;
        pl.box.lo = {-1.0, -1.0};
        pl.box.hi = {1.0, 1.0};
        pl.box.count = {nd, nd};
        pl.box.periodic = {false, false};
        pl.on_stratum.assign(pl.box.nodes(), 0);
        pl.in_closure.assign(pl.box.nodes(), 0);
        for (int k = 0; k < pl.box.nodes(); ++k) {
            const auto m = pl.box.unflatten(k);
            const double r = std::hypot(pl.box.coord(0, m[0]), pl.box.coord(1, m[1]));
            pl.on_stratum[k] = r < 1.0 - tol;
            pl.in_closure[k] = r <= 1.0 + tol;
        }
        c2.plaques.push_back(static_cast<int>(x2.plaques.size()));
        x2.plaques.push_back(pl);
    }
    x2.charts.push_back(c2);
    x2.distance = [beta](const Vec& z) {
        const double r = std::hypot(z[0], z[1]);
        return std::hypot(std::max(0.0, r - 1.0), std::abs(z[2]) - beta);
    };

    Stratum x3;
    x3.name = "X3";
    x3.dim = 3;
    x3.leaf_axes = {0, 1, 2};
    x3.tube_width = 0.08;
    {
        const int nb = detail::grid_count(2.0, box_spacing);
        Plaque pl;
        pl.code = "core";
        pl.base = Vec::Zero(3);
        pl.box.lo = {-1.0, -1.0, -beta};
        pl.box.hi = {1.0, 1.0, beta};
        pl.box.count = {nb, nb, nh};
        pl.box.periodic = {false, false, false};
        pl.on_stratum.assign(pl.box.nodes(), 0);
        pl.in_closure.assign(pl.box.nodes(), 0);
        for (int k = 0; k < pl.box.nodes(); ++k) {
            const auto m = pl.box.unflatten(k);
            const double r = std::hypot(pl.box.coord(0, m[0]), pl.box.coord(1, m[1]));
            const bool interior_h = m[2] > 0 && m[2] < nh - 1;
            pl.on_stratum[k] = r < 1.0 - tol && interior_h;
            pl.in_closure[k] = r <= 1.0 + tol;
        }
        x3.plaques.push_back(pl);
        x3.charts.push_back({"core", {0}});
    }
    x3.distance = [beta](const Vec& z) {
        const double r = std::hypot(z[0], z[1]);
        return std::hypot(std::max(0.0, r - 1.0), std::max(0.0, std::abs(z[2]) - beta));
    };

    s.strata = {x0, x1, x2, x3};
    s.incidence = {{true, true, true, true}, {false, true, false, true}, {false, false, true, true},
                   {false, false, false, true}};
    s.resolution = 0.0;
    finalize(s);
    // images follow the angle map k -> power * k and the sign map h -> +
    auto& X0 = s.strata[0];
    for (int i = 0; i < static_cast<int>(X0.plaques.size()); ++i)
        X0.plaques[i].image = angles + (power * (i % angles)) % angles;
    auto& X1 = s.strata[1];
    for (int k = 0; k < angles; ++k) X1.plaques[k].image = (power * k) % angles;
    s.strata[2].plaques[0].image = 1;
    s.strata[2].plaques[1].image = 1;
    s.strata[3].plaques[0].image = 0;
    return s;
}

inline Preset viana_preset(int power, std::optional<double> t = {}, std::optional<double> eta_prime = {},
                           int density = 0) {
    Preset P;
    const double c = power == 4 ? -1.0 : 0.2;
    P.name = "viana-z" + std::to_string(power);
    const double box = density > 0 ? 1.0 / density : 1.0 / 16;
    P.s = viana_stratification(power, c, 64, box / 2, box);
    P.f = viana_map(power, c);
    Vec dir = Vec::Ones(3) / std::sqrt(3.0);
    P.unit = global_perturbation(3, 1.0, dir, Modulation::Cos, 1);
    P.certs = {{0, 16, 0, true, true}, {1, 20, 0, true, true}, {2, 32, 16, false, false}};
    ConfinementParams cp;
    cp.eta = 0.001;
    cp.horizon = 64;
    cp.grid = 1.0 / 64;
    cp.tube = 0.05;
    P.confine.push_back({1, cp});
    P.expans.push_back({1, 0.05, 12});
    detail::finish(P, 0.005, t, eta_prime, 0.02);
    return P;
}

// {-1, 1} and (-1, 1) under x -> x^2; the square is their product.
inline SampledStratification square_factor(int density = 16) {
    SampledStratification s;
    s.ambient = AmbientSpace::euclidean(1);
    Stratum v;
    v.name = "V";
    v.dim = 0;
    v.normal_axes = {0};
    v.tube_width = 0.4;
    v.plaques = {point_plaque("-", Vec::Constant(1, -1.0)), point_plaque("+", Vec::Constant(1, 1.0))};
    v.charts = {{"V", {0, 1}}};
    Stratum e;
    e.name = "E";
    e.dim = 1;
    e.leaf_axes = {0};
    e.tube_width = 0.15;
    e.plaques = {interval_plaque("e", Vec::Zero(1), -1.0, 1.0, nodes_for(2.0, density))};
    e.charts = {{"E", {0}}};
    s.strata = {v, e};
    s.incidence = {{true, true}, {false, true}};
    finalize(s);
    assign_images(s, [](const Vec& x) { return Vec::Constant(1, x[0] * x[0]); });
    return s;
}

inline Preset square_preset(std::optional<double> t = {}, std::optional<double> eta_prime = {}, int density = 0) {
    Preset P;
    P.name = "square-corners";
    const auto a = square_factor(density > 0 ? density : 16);
    P.s = build_product_stratification(a, a);
    const auto sq = poly_product("x^2", AmbientSpace::euclidean(1), {{0.0, 0.0, 1.0}});
    P.f = product_map(sq, sq);
    assign_images(P.s, [&](const Vec& x) { return eval_map(P.f, x); });
    P.unit = bump_perturbation(1.0, Vec::Zero(2), Vec::Constant(2, 3.0), Vec::Ones(2));
    P.certs = {{0, 20, 0, true, true}, {1, 32, 16, false, false}, {2, 32, 16, false, false}};
    ConfinementParams cp;
    cp.eta = 0.001;
    cp.horizon = 64;
    cp.grid = 1.0 / 128;
    cp.tube = 0.1;
    P.confine.push_back({0, cp});
    P.expans.push_back({0, 0.05, 12});
    detail::finish(P, 0.005, t, eta_prime, 0.0375);
    return P;
}

// one periodic leaf y = 0 of the circle times the line
inline SampledStratification circle_leaf(int nodes, double tube_width) {
    SampledStratification s;
    s.ambient = AmbientSpace({Axis::circle(2.0 * M_PI), Axis::line()});
    Stratum c;
    c.name = "C";
    c.dim = 1;
    c.leaf_axes = {0};
    c.normal_axes = {1};
    c.tube_width = tube_width;
    Plaque pl;
    pl.code = "c";
    pl.base = Vec::Zero(2);
    pl.box.lo = {0.0};
    pl.box.hi = {2.0 * M_PI};
    pl.box.count = {nodes};
    pl.box.periodic = {true};
    pl.on_stratum.assign(nodes, 1);
    pl.in_closure.assign(nodes, 1);
    pl.image = 0;
    c.plaques = {pl};
    c.charts = {{"c", {0}}};
    s.strata = {c};
    s.incidence = {{true}};
    finalize(s);
    return s;
}

inline Preset doubling_affine_preset(std::optional<double> t = {}, std::optional<double> eta_prime = {},
                                     int nodes = 0) {
    Preset P;
    P.name = "doubling-affine";
    P.s = circle_leaf(nodes > 0 ? nodes : 1024, 0.4);
    P.f = poly_product("doubling-affine", P.s.ambient, {{0.0, 2.0}, {0.0, 4.0}});
    P.unit = global_perturbation(2, 1.0, Vec::Unit(2, 1), Modulation::Cos, 0);
    P.certs = {{0, 20, 0, true, true}};
    ConfinementParams cp;
    cp.eta = 0.001;
    cp.horizon = 64;
    cp.grid = 1.0 / 256;
    cp.tube = 0.1;
    P.confine.push_back({0, cp});
    detail::finish(P, 0.1, t, eta_prime, 0.1);
    return P;
}

inline Preset flat_leaf_preset(std::optional<double> t = {}, std::optional<double> eta_prime = {}, int nodes = 0,
                               double normal_rate = 3.0) {
    Preset P;
    P.name = "flat-leaf";
    P.s = circle_leaf(nodes > 0 ? nodes : 1024, 0.4);
    P.f = poly_product("flat-leaf", P.s.ambient, {{0.0, 1.0}, {0.0, normal_rate}});
    P.unit = global_perturbation(2, 1.0, Vec::Unit(2, 1), Modulation::Sin, 0);
    P.certs = {{0, 20, 0, true, true}};
    ConfinementParams cp;
    cp.eta = 0.001;
    cp.horizon = 64;
    cp.grid = 1.0 / 256;
    cp.tube = 0.1;
    P.confine.push_back({0, cp});
    detail::finish(P, 0.1, t, eta_prime, 0.1);
    return P;
}

// (x, y, z) -> (x + x^3, 2y, 2z) with the origin as a 0-dimensional stratum;
// x is not expanded, so persistence is not expected.
inline Preset cexp_preset(std::optional<double> t = {}, std::optional<double> eta_prime = {}) {
    Preset P;
    P.name = "cexp-demo";
    SampledStratification s;
    s.ambient = AmbientSpace::euclidean(3);
    Stratum o;
    o.name = "O";
    o.dim = 0;
    o.normal_axes = {0, 1, 2};
    o.tube_width = 0.2;
    o.plaques = {point_plaque("o", Vec::Zero(3))};
    o.plaques[0].image = 0;
    o.charts = {{"o", {0}}};
    s.strata = {o};
    s.incidence = {{true}};
    finalize(s);
    P.s = s;
    P.f = poly_product("cexp", s.ambient, {{0.0, 1.0, 0.0, 1.0}, {0.0, 2.0}, {0.0, 2.0}});
    P.unit = bump_perturbation(1.0, Vec::Zero(3), Vec::Ones(3), Vec::Unit(3, 0));
    P.certs = {{0, 20, 0, false, false}};
    detail::finish(P, 0.01, t, eta_prime, 0.05);
    return P;
}

// diag(a, b) on the plane with the x-axis segment [-1, 1] as a leaf; only the
// centre node is a sample.
inline Preset linear_preset(double a, double b) {
    Preset P;
    P.name = "linear";
    SampledStratification s;
    s.ambient = AmbientSpace::euclidean(2);
    Stratum l;
    l.name = "L";
    l.dim = 1;
    l.leaf_axes = {0};
    l.normal_axes = {1};
    l.tube_width = 0.2;
    Plaque pl;
    pl.code = "l";
    pl.base = Vec::Zero(2);
    pl.box = line_box(-1.0, 1.0, 3);
    pl.on_stratum = {0, 1, 0};
    pl.in_closure = {1, 1, 1};
    pl.image = 0;
    l.plaques = {pl};
    l.charts = {{"l", {0}}};
    s.strata = {l};
    s.incidence = {{true}};
    finalize(s);
    P.s = s;
    P.f = linear_diag({a, b});
    P.unit = global_perturbation(2, 1.0, Vec::Unit(2, 1));
    P.certs = {{0, 20, 0, true, true}};
    detail::finish(P, 0.0, 0.0, {}, 0.05);
    return P;
}

inline Preset make_preset(const std::string& name, std::optional<double> t = {}, std::optional<double> eta_prime = {},
                          int grid = 0) {
    if (name == "quad-product") return quad_product_preset(t, eta_prime, grid);
    if (name == "viana-z4") return viana_preset(4, t, eta_prime, grid);
    if (name == "viana-z2") return viana_preset(2, t, eta_prime, grid);
    if (name == "square-corners") return square_preset(t, eta_prime, grid);
    if (name == "doubling-affine") return doubling_affine_preset(t, eta_prime, grid);
    if (name == "flat-leaf") return flat_leaf_preset(t, eta_prime, grid);
    if (name == "cexp-demo") return cexp_preset(t, eta_prime);
    throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace lamina
