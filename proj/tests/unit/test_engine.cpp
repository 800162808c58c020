#include "helpers.hpp"

#include <catch_amalgamated.hpp>

#include <sstream>

using namespace lamina;
using namespace testkit;
using Catch::Approx;

namespace {

double sup_normal_error(const Preset& P, const PersistenceResult& R, double (*oracle)(double)) {
    double err = 0.0;
    for (const auto& r : P.s.samples(0)) {
        const double th = P.s.point(r)[0];
        err = std::max(err, std::abs(R.field.disp[0][r.plaque][r.node][1] - oracle(th)));
    }
    return err;
}

double flat_sigma(double th) { return -0.05 * std::sin(th); }

}  // namespace

TEST_CASE("doubling-affine converges to the series graph") {
    auto P = make_preset("doubling-affine");
    const auto R = persist_stratification(P.s, P.f, P.fp, P.eta_prime);
    CHECK(P.s.samples(0).size() == 1024);
    CHECK(sup_normal_error(P, R, doubling_sigma) < 1e-8);
    CHECK(std::abs(R.field.disp[0][0][0][1] + 1.0 / 30.0) < 1e-8);
    CHECK(R.contraction_ratio == Approx(0.25).margin(0.01));
    CHECK(R.residual_max < 1e-10);
    CHECK(R.fiber_defect == 0.0);
}

TEST_CASE("flat leaf converges at one third") {
    auto P = make_preset("flat-leaf");
    const auto R = persist_stratification(P.s, P.f, P.fp, P.eta_prime);
    CHECK(sup_normal_error(P, R, flat_sigma) < 1e-8);
    CHECK(R.contraction_ratio == Approx(1.0 / 3.0).margin(0.01));
    // geometric convergence past the first sweeps, within the measured bound
    for (const auto& tr : R.traces)
        for (std::size_t k = 3; k < tr.ratio.size(); ++k)
            if (tr.d[k] > 1e-11) CHECK(tr.ratio[k] <= 1.0 / 3.0 + 0.05);
}

TEST_CASE("unperturbed map returns the identity embedding bitwise") {
    for (const std::string name : {"square-corners", "doubling-affine", "cexp-demo"}) {
        CAPTURE(name);
        auto P = make_preset(name, 0.0);
        const auto R = persist_stratification(P.s, P.f, P.fp, P.eta_prime);
        for (const auto& st : R.field.disp)
            for (const auto& pl : st)
                for (const auto& d : pl)
                    for (int a = 0; a < d.size(); ++a) CHECK(d[a] == 0.0);
        CHECK(R.residual_max == 0.0);
        CHECK(R.displacement_sup == 0.0);
    }
}

TEST_CASE("square corners persist with displacements in the fiber and under the cap") {
    auto P = make_preset("square-corners");
    const auto R = persist_stratification(P.s, P.f, P.fp, P.eta_prime);
    CHECK(R.residual_max < 1e-10);
    CHECK(R.fiber_defect < 1e-14);
    CHECK(R.displacement_sup <= P.eta_prime);
    CHECK(R.leaf_distance_max <= P.eta_prime);
    CHECK(R.displacement_sup > 0.0);
    CHECK(R.filtration.outside_tube == 0);
    CHECK(R.filtration.margin > 0.0);
    CHECK(check_frontier_and_coherence(P.s, &R.cloud).pass());
}

TEST_CASE("displacement grows linearly in t") {
    auto P = make_preset("square-corners");
    const auto a = persist_stratification(P.s, P.f, P.at(0.004), P.eta_prime);
    const auto b = persist_stratification(P.s, P.f, P.at(0.002), P.eta_prime);
    CHECK(a.displacement_sup / b.displacement_sup == Approx(2.0).epsilon(0.1));
}

TEST_CASE("engine runs are bitwise repeatable") {
    auto P = make_preset("square-corners");
    const auto a = persist_stratification(P.s, P.f, P.fp, P.eta_prime);
    const auto b = persist_stratification(P.s, P.f, P.fp, P.eta_prime);
    std::ostringstream oa, ob;
    for (int i = 0; i < P.s.size(); ++i) {
        write_embedding_csv(oa, P.s, a, i);
        write_embedding_csv(ob, P.s, b, i);
    }
    CHECK(oa.str() == ob.str());
}

TEST_CASE("filtration assigns every node a ring at or below its stratum") {
    auto P = make_preset("quad-product", {}, {}, 8);
    const auto F = build_filtration(P.s, P.f);
    int total = 0;
    for (std::size_t i = 0; i < F.nodes.size(); ++i) {
        const auto& pl = F.plan[i];
        if (pl.halo) continue;
        ++total;
        CHECK(pl.ring <= F.nodes[i].stratum);
        CHECK(P.s.incidence[pl.ring][F.nodes[i].stratum]);
        CHECK(pl.fiber <= pl.ring);
        for (double r : pl.rho) CHECK((r >= 0.0 && r <= 1.0));
    }
    int counted = 0;
    for (int c : F.ring_count) counted += c;
    CHECK(counted == total);
    CHECK(F.margin > 0.0);
}

TEST_CASE("strata indexed against their incidence are refused") {
    auto s = quad_factor(8);
    std::swap(s.strata[0], s.strata[1]);
    s.incidence = {{true, false}, {true, true}};
    CHECK_THROWS_AS(build_filtration(s, quad_map_1d()), StrataOrderViolation);
}

TEST_CASE("cexp family exceeds the fiber cap") {
    auto P = make_preset("cexp-demo");
    CHECK_THROWS_AS(persist_stratification(P.s, P.f, P.fp, P.eta_prime), FiberCapExceeded);
}

TEST_CASE("separable perturbation of the product splits into factors") {
    const auto fa = quad_map_1d();
    const auto fap = perturb(fa, bump_perturbation(0.01, Vec::Zero(1), Vec::Constant(1, 3.0), Vec::Ones(1)));
    const auto sa = quad_factor(8);
    const auto r = product_crosscheck(sa, fa, fap, sa, fa, fa, 0.05);
    CHECK(r.compared > 0);
    CHECK(r.discrepancy < 1e-9);
    CHECK(r.product.residual_max < 1e-10);
    const auto z = product_crosscheck(sa, fa, fa, sa, fa, fa, 0.05);
    CHECK(z.discrepancy == 0.0);
}

TEST_CASE("quad-product at low density persists under the bump") {
    auto P = make_preset("quad-product", {}, {}, 8);
    const auto R = persist_stratification(P.s, P.f, P.fp, P.eta_prime);
    CHECK(R.residual_max < 1e-8);
    CHECK(R.displacement_sup <= 5 * P.t);
    CHECK(check_frontier_and_coherence(P.s, &R.cloud).pass());
    const auto j = to_json(R, P.eta_prime, P.t);
    CHECK(j["iterations"].get<int>() == R.iterations);
}
