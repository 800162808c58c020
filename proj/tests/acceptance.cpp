// Acceptance suite: one PASS/FAIL line per criterion.  Usage: acceptance <path-to-lamina-cli>

#include <lamina/expansion.hpp>
#include <lamina/presets.hpp>

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lamina;

namespace {

// tolerances
constexpr double kOracleTol = 1e-8;
constexpr double kRateTol = 0.01;
constexpr double kConeExact = 1e-12;
constexpr double kJetTol = 1e-9;
constexpr double kJetRatio = 0.55;
constexpr double kResidual = 1e-8;
constexpr double kDisplacementPerT = 5.0;
constexpr double kHalvingTol = 0.10;
constexpr double kVianaLambda = 1.2;
constexpr double kCrosscheck = 1e-9;

// time budgets in seconds
constexpr double kBudgetOracle = 1.0;
constexpr double kBudgetRates = 2.0;
constexpr double kBudgetAdapted = 5.0;
constexpr double kBudgetCones = 1.0;
constexpr double kBudgetJets = 1.0;
constexpr double kBudgetQuad = 30.0;
constexpr double kBudgetViana = 60.0;
constexpr double kBudgetFixed = 5.0;
constexpr double kBudgetShadow = 30.0;
constexpr double kBudgetCross = 30.0;
constexpr double kBudgetSuite = 180.0;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
    std::printf("%s [%d] %s: %s\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
    char b[128];
    std::snprintf(b, sizeof b, f, a);
    return b;
}

std::string cli;

int run_cli(const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " --verbosity 0 > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

json load(const fs::path& p) {
    std::ifstream in(p);
    if (!in) return json();
    return json::parse(in, nullptr, false);
}

double sigma_series(double th) {
    double s = 0.0;
    for (int k = 0; k < 30; ++k) s += std::pow(4.0, -(k + 1)) * std::cos(std::ldexp(th, k));
    return -0.1 * s;
}

struct SuiteRun {
    std::map<std::string, int> codes;
    std::map<std::string, double> seconds;
};

SuiteRun full_suite(const fs::path& root) {
    SuiteRun r;
    fs::remove_all(root);
    for (const auto& name : preset_names()) {
        const auto t0 = Clock::now();
        r.codes[name] = run_cli("run --preset " + name + " --out \"" + (root / name).string() + "\"");
        r.seconds[name] = since(t0);
    }
    return r;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    if (!fs::exists(root)) return out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), root).string()] = ss.str();
    }
    return out;
}

void criterion1() {
    const auto t0 = Clock::now();
    auto P = make_preset("doubling-affine");
    const auto R = persist_stratification(P.s, P.f, P.fp, P.eta_prime);
    double err = 0.0;
    int n = 0;
    for (const auto& ref : P.s.samples(0)) {
        err = std::max(err, std::abs(R.field.disp[0][ref.plaque][ref.node][1] - sigma_series(P.s.point(ref)[0])));
        ++n;
    }
    const double s0 = R.field.disp[0][0][0][1];
    const double dt = since(t0);
    report(1, n == 1024 && err < kOracleTol && std::abs(s0 + 1.0 / 30.0) < kOracleTol && dt < kBudgetOracle,
           "doubling-affine graph against the series",
           std::to_string(n) + " samples, sup error " + fmt("%.3g", err) + ", sigma(0) = " + fmt("%.15f", s0) +
               ", " + fmt("%.2fs", dt));
}

void criterion2() {
    const auto t0 = Clock::now();
    auto F = make_preset("flat-leaf");
    const auto rf = persist_stratification(F.s, F.f, F.fp, F.eta_prime);
    auto D = make_preset("doubling-affine");
    const auto rd = persist_stratification(D.s, D.f, D.fp, D.eta_prime);
    const double dt = since(t0);
    const bool ok = std::abs(rf.contraction_ratio - 1.0 / 3.0) <= kRateTol &&
                    std::abs(rd.contraction_ratio - 0.25) <= kRateTol && dt < kBudgetRates;
    report(2, ok, "contraction rates", "flat-leaf " + fmt("%.6f", rf.contraction_ratio) + ", doubling-affine " +
                                           fmt("%.6f", rd.contraction_ratio) + ", " + fmt("%.2fs", dt));
}

void criterion3() {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string detail;
    for (const std::string name : {"doubling-affine", "quad-product"}) {
        auto P = make_preset(name);
        const auto m = build_adapted_metric(P.s, 0, P.f);
        const auto c = verify_adapted(m, P.s, P.f);
        const auto sharp = verify_adapted(m, P.s, P.f, 1.0, m.M - 1);
        ok = ok && c.pass && c.worst_margin > 0.0 && !sharp.pass;
        detail += name + " " + P.s.strata[0].name + ": N=" + std::to_string(m.N) + " M=" + std::to_string(m.M) +
                  " margin " + fmt("%.4g", c.worst_margin) + (sharp.pass ? " M-1 still passes" : " M-1 breaks") + "; ";
    }
    const double dt = since(t0);
    report(3, ok && dt < kBudgetAdapted, "adapted metric", detail + fmt("%.2fs", dt));
}

void criterion4() {
    const auto t0 = Clock::now();
    auto good = linear_preset(2.0, 4.0);
    const auto cf = build_cone_field(good.s, 0, good.f);
    const auto k = check_cone_invariance(cf, good.s, good.f);
    bool failed = false;
    auto bad = linear_preset(3.0, 2.0);
    try {
        build_cone_field(bad.s, 0, bad.f);
    } catch (const ConeSearchFailed&) {
        failed = true;
    }
    const double dt = since(t0);
    // boundary |v| = |u| maps to growth |(2, 4)| / sqrt 2 and ratio 4 / 2
    const bool ok = cf.eps_cone == 1.0 && cf.fan_size >= 32 && k.invariant && k.min_growth >= 2.0 &&
                    std::abs(k.min_growth - std::sqrt(10.0)) < kConeExact && std::abs(k.min_ratio - 2.0) < kConeExact &&
                    failed && dt < kBudgetCones;
    report(4, ok, "cone certificate",
           "diag(2,4) fan " + std::to_string(cf.fan_size) + ", growth " + fmt("%.15f", k.min_growth) +
               ", diag(3,2) " + (failed ? "ConeSearchFailed" : "unexpectedly found a cone") + ", " + fmt("%.2fs", dt));
}

void criterion5() {
    const auto t0 = Clock::now();
    auto P = linear_preset(2.0, 4.0);
    double lip = 0.0;
    for (int i = 0; i < 64; ++i) {
        auto a = zero_jet(P.s, 0, 1), b = a;
        a.l1(0, 0) = -4.0 + 0.125 * i;
        b.l1(0, 0) = 3.0 - 0.0625 * i;
        const double da = jet_transfer(P.f, Vec::Zero(2), a).l1(0, 0);
        const double db = jet_transfer(P.f, Vec::Zero(2), b).l1(0, 0);
        if (a.l1(0, 0) != b.l1(0, 0)) lip = std::max(lip, std::abs(da - db) / std::abs(a.l1(0, 0) - b.l1(0, 0)));
    }
    // slope field along orbits of doubling-affine, off the dyadic grid
    auto D = make_preset("doubling-affine");
    const int depth = 14, count = 256;
    std::vector<std::vector<double>> sl(depth + 1, std::vector<double>(count));
    for (int i = 0; i < count; ++i) {
        Vec x(2);
        x << 2.0 * M_PI * std::fmod(i * 0.6180339887498949 + 0.05, 1.0), 0.0;
        std::vector<Vec> orbit{x};
        for (int k = 0; k < depth; ++k) orbit.push_back(eval_map(D.fp, orbit.back()));
        for (int n = 1; n <= depth; ++n) {
            auto l = zero_jet(D.s, 0, 1);
            for (int k = n - 1; k >= 0; --k) l = jet_transfer(D.fp, orbit[k], l);
            sl[n][i] = l.l1(0, 0);
        }
    }
    double worst = 0.0, prev = -1.0;
    for (int n = 1; n < depth; ++n) {
        double m = 0.0;
        for (int i = 0; i < count; ++i) m = std::max(m, std::abs(sl[n + 1][i] - sl[n][i]));
        if (prev > 0.0 && n > 3) worst = std::max(worst, m / prev);
        prev = m;
    }
    const double dt = since(t0);
    report(5, std::abs(lip - 0.5) < kJetTol && worst <= kJetRatio && dt < kBudgetJets, "jet contraction",
           "diag(2,4) Lipschitz " + fmt("%.12f", lip) + ", doubling-affine ratio " + fmt("%.4f", worst) + ", " +
               fmt("%.2fs", dt));
}

void criterion6(const fs::path& runA, double secs, const fs::path& work) {
    const json r = load(runA / "quad-product" / "report.json");
    const auto t0 = Clock::now();
    const int code = run_cli("run --preset quad-product --t 0.005 --out \"" + (work / "quad-half").string() + "\"");
    const double half_secs = since(t0);
    const json h = load(work / "quad-half" / "report.json");
    if (r.is_discarded() || h.is_discarded() || !r.contains("engine") || !h.contains("engine") ||
        !r["engine"].contains("residual_max") || !h["engine"].contains("displacement_sup")) {
        report(6, false, "quad-product persistence", "missing report (exit " + std::to_string(code) + ")");
        return;
    }
    const double t = r["t"].get<double>();
    const double res = r["engine"]["residual_max"].get<double>();
    const double sup = r["engine"]["displacement_sup"].get<double>();
    const double sup_half = h["engine"]["displacement_sup"].get<double>();
    const double ratio = sup / sup_half;
    const bool frontier = r["engine"]["frontier"]["pass"].get<bool>() && h["engine"]["frontier"]["pass"].get<bool>();
    const bool ok = t == 0.01 && res < kResidual && sup <= kDisplacementPerT * t &&
                    std::abs(ratio - 2.0) <= 2.0 * kHalvingTol && frontier && secs < kBudgetQuad &&
                    half_secs < kBudgetQuad;
    report(6, ok, "quad-product persistence",
           "residual " + fmt("%.3g", res) + ", sup " + fmt("%.6g", sup) + " (<= " + fmt("%.3g", kDisplacementPerT * t) +
               "), sup(t)/sup(t/2) " + fmt("%.4f", ratio) + ", frontier " + (frontier ? "ok" : "broken") + ", " +
               fmt("%.1fs", secs) + " and " + fmt("%.1fs", half_secs));
}

void criterion7(const fs::path& runA, double secs) {
    const fs::path dir = runA / "viana-z4";
    const json r = load(dir / "report.json");
    bool ok = !r.is_discarded() && r.contains("engine") && r["engine"].contains("residual_max");
    std::string detail;
    double lam1 = 0.0;
    for (const std::string x : {"X0", "X1", "X2"}) {
        const json c = load(dir / ("cert_normal_expansion_" + x + ".json"));
        const bool pass = !c.is_discarded() && c.value("pass", false);
        ok = ok && pass;
        if (x == "X1" && pass) lam1 = c["lambda"].get<double>();
        detail += x + (pass ? " pass" : " FAIL") + "; ";
    }
    const double res = ok ? r["engine"]["residual_max"].get<double>() : 1.0;
    ok = ok && lam1 >= kVianaLambda && res < kResidual && r["t"].get<double>() == 0.005 && secs < kBudgetViana;
    report(7, ok, "viana-z4 persistence",
           detail + "lambda(X1) " + fmt("%.4f", lam1) + ", residual " + fmt("%.3g", res) + ", " + fmt("%.1fs", secs));
}

void criterion8() {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string bad;
    for (const auto& name : preset_names()) {
        auto P = make_preset(name, 0.0);
        const auto R = persist_stratification(P.s, P.f, P.fp, P.eta_prime);
        bool zero = R.residual_max == 0.0 && R.displacement_sup == 0.0;
        for (const auto& st : R.field.disp)
            for (const auto& pl : st)
                for (const auto& d : pl)
                    for (int a = 0; a < d.size(); ++a) zero = zero && d[a] == 0.0 && !std::signbit(d[a]);
        if (!zero) bad += name + " ";
        ok = ok && zero;
    }
    const double dt = since(t0);
    report(8, ok && dt < kBudgetFixed, "fixed point at t = 0",
           (ok ? std::string("all presets bitwise zero") : "nonzero: " + bad) + ", " + fmt("%.2fs", dt));
}

SampledStratification points_on(AmbientSpace amb, const std::vector<double>& xs, double tube) {
    SampledStratification s;
    s.ambient = std::move(amb);
    Stratum st;
    st.name = "P";
    st.normal_axes = {0};
    st.tube_width = tube;
    Chart c{"P", {}};
    for (std::size_t i = 0; i < xs.size(); ++i) {
        c.plaques.push_back(static_cast<int>(i));
        st.plaques.push_back(point_plaque("p" + std::to_string(i), Vec::Constant(1, xs[i])));
    }
    st.charts.push_back(c);
    s.strata = {st};
    s.incidence = {{true}};
    finalize(s);
    return s;
}

void criterion9() {
    const auto t0 = Clock::now();
    const double beta = positive_fixed_point(-1.0);
    const auto sb = points_on(AmbientSpace::euclidean(1), {beta}, 0.1);
    ConfinementParams p;
    p.tube = 0.1;
    const auto table = exit_time_table(sb, 0, quad_map_1d(), {Vec::Constant(1, beta - 0.01)}, p);
    const int exit = table.rows.at(0).exit_time;

    std::vector<double> grid;
    for (int k = 0; k < 1024; ++k) grid.push_back(k / 1024.0);
    const AmbientSpace circle({Axis::circle(1.0)});
    const auto sd = points_on(circle, grid, 0.05);
    const auto dbl = poly_product("doubling", circle, {{0.0, 2.0}});
    const auto idm = poly_product("identity", circle, {{0.0, 1.0}});
    const auto rd = expansiveness_search(sd, 0, dbl, 0.1, 12);
    const auto ri = expansiveness_search(sd, 0, idm, 0.1, 12);
    const double dt = since(t0);
    report(9, exit == 2 && !rd.found && ri.found && dt < kBudgetShadow, "shadowing",
           "exit time " + std::to_string(exit) + ", doubling " + (rd.found ? "counterexample" : "none") + " over " +
               std::to_string(rd.pairs_checked) + " pairs, identity " + (ri.found ? "counterexample" : "none") + ", " +
               fmt("%.2fs", dt));
}

void criterion10() {
    const auto t0 = Clock::now();
    auto P = quad_product_preset({}, {}, 0, true);
    const auto fa = quad_map_1d();
    PerturbationSpec pa = bump_perturbation(P.t, Vec::Zero(1), Vec::Constant(1, 3.0), Vec::Ones(1));
    const auto r = product_crosscheck(quad_factor(), fa, perturb(fa, pa), quad_factor(), fa, fa, P.eta_prime, 1e-12, &P.s);
    const double dt = since(t0);
    report(10, r.discrepancy < kCrosscheck && r.compared > 0 && dt < kBudgetCross, "product cross-check",
           "max discrepancy " + fmt("%.3g", r.discrepancy) + " over " + std::to_string(r.compared) + " samples, " +
               fmt("%.1fs", dt));
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <lamina-cli>\n");
        return 2;
    }
    cli = argv[1];
    const auto start = Clock::now();
    const fs::path work = fs::absolute("acceptance-artifacts");
    fs::create_directories(work);

    // unknown presets stop before any artifact is written
    fs::remove_all(work / "nope");
    const int nope = run_cli("run --preset nope --out \"" + (work / "nope").string() + "\"");
    const bool nope_ok = nope == 1 && !fs::exists(work / "nope");

    const SuiteRun A = full_suite(work / "runA");

    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6(work / "runA", A.seconds.at("quad-product"), work);
    criterion7(work / "runA", A.seconds.at("viana-z4"));
    criterion8();
    criterion9();
    criterion10();

    const SuiteRun B = full_suite(work / "runB");
    const auto sa = snapshot(work / "runA"), sb = snapshot(work / "runB");
    bool codes_ok = nope_ok;
    std::string codes;
    for (const auto& [name, code] : A.codes) {
        const int want = name == "cexp-demo" ? 3 : 0;
        codes_ok = codes_ok && code == want && B.codes.at(name) == code;
        codes += name + "=" + std::to_string(code) + " ";
    }
    const double total = since(start);
    report(11, !sa.empty() && sa == sb && codes_ok && total < kBudgetSuite, "determinism",
           std::to_string(sa.size()) + " artifacts " + (sa == sb ? "byte-identical" : "DIFFER") + ", exit codes " +
               codes + "(nope=" + std::to_string(nope) + "), suite " + fmt("%.1fs", total));

    std::printf("%d of 11 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
