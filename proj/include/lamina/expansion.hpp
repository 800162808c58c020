#pragma once

#include "dynamics.hpp"
#include "strata.hpp"

#include <json.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace lamina {

// Deterministic subsample: every k-th sample so that at most `cap` remain.
inline std::vector<SampleRef> subsample(const std::vector<SampleRef>& all, int cap) {
    if (cap <= 0 || static_cast<int>(all.size()) <= cap) return all;
    std::vector<SampleRef> out;
    const double step = static_cast<double>(all.size()) / cap;
    for (int i = 0; i < cap; ++i) out.push_back(all[static_cast<std::size_t>(i * step)]);
    return out;
}

namespace detail {

inline std::vector<Vec> orbit(const SampledStratification& s, int stratum, const EndomorphismSpec& f,
                              const Vec& x, int n, bool require_samples) {
    std::vector<Vec> o{x};
    for (int k = 0; k < n; ++k) {
        o.push_back(eval_map(f, o.back()));
        if (!require_samples) continue;
        const int pl = s.locate(stratum, o.back(), 1e-7);
        if (pl < 0)
            throw OrbitLeavesSamples("orbit of a sample of " + s.strata[stratum].name + " leaves the sampled region after " +
                                     std::to_string(k + 1) + " steps");
        // normal rounding grows like the normal rate; pin it back to the plaque
        const Stratum& st = s.strata[stratum];
        for (int ax : st.normal_axes) o.back()[ax] = st.plaques[pl].base[ax];
    }
    return o;
}

inline Mat block(const Mat& a, const std::vector<int>& rows, const std::vector<int>& cols) {
    Mat b(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) b(i, j) = a(rows[i], cols[j]);
    return b;
}

// symmetric square root and inverse square root
inline void sqrt_pair(const Mat& g, Mat& root, Mat& inv_root, double& smallest) {
    Eigen::SelfAdjointEigenSolver<Mat> es(g);
    const Vec ev = es.eigenvalues();
    smallest = ev.size() ? ev.minCoeff() : std::numeric_limits<double>::infinity();
    Vec r = ev.cwiseMax(0.0).cwiseSqrt();
    Vec ir(ev.size());
    for (int i = 0; i < ev.size(); ++i) ir[i] = ev[i] > 0.0 ? 1.0 / std::sqrt(ev[i]) : 0.0;
    root = es.eigenvectors() * r.asDiagonal() * es.eigenvectors().transpose();
    inv_root = es.eigenvectors() * ir.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

struct ExpansionReport {
    std::string stratum;
    int r = 1;
    int n_max = 0;
    int burn_in = 0;
    double lambda = 0.0;
    double C_min = 0.0, C_max = 0.0;
    bool pass = false;
    int samples = 0;
    SampleRef worst;
    Vec worst_point;
    Vec worst_direction;
};

// Fits lambda and C(x) in |p Df^n v1| >= C(x) lambda^n (1 + |Df^n v0|^r).
// With q_n = m(p Df^n N) / (1 + |Df^n T|^r), lambda_x is the mean rate
// (q_n_max / q_B)^(1/(n_max - B)) and C(x) = min_n q_n / lambda^n, so
// transients near the frontier go into C(x) rather than lambda.
inline ExpansionReport check_normal_expansion(const SampledStratification& s, int stratum,
                                              const EndomorphismSpec& f, int r, int n_max, int burn_in = 0,
                                              int max_samples = 0) {
    if (n_max <= burn_in) throw std::invalid_argument("n_max must exceed the burn-in");
    const Stratum& st = s.strata[stratum];
    ExpansionReport rep;
    rep.stratum = st.name;
    rep.r = r;
    rep.n_max = n_max;
    rep.burn_in = burn_in;
    const auto refs = subsample(s.samples(stratum), max_samples);
    rep.samples = static_cast<int>(refs.size());
    if (refs.empty() || st.codim() == 0) {
        rep.pass = st.codim() == 0;
        rep.lambda = std::numeric_limits<double>::infinity();
        return rep;
    }
    const Mat T = s.tangent(stratum), N = s.normal(stratum);
    std::vector<std::vector<double>> q(refs.size());
    std::vector<Vec> dirs(refs.size());
    double lambda = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const Vec x = s.point(refs[i]);
        const auto o = detail::orbit(s, stratum, f, x, n_max, true);
        Mat D = Mat::Identity(s.ambient.dim(), s.ambient.dim());
        q[i].resize(n_max + 1);
        double lam_x = std::numeric_limits<double>::infinity();
        for (int n = 0; n <= n_max; ++n) {
            if (n > 0) D = eval_differential(f, o[n - 1]) * D;
            const double leaf = st.dim > 0 ? std::pow(op_norm(D * T), r) : 0.0;
            q[i][n] = sigma_min(N.transpose() * D * N) / (1.0 + leaf);
            if (n == n_max) {
                lam_x = std::pow(q[i][n] / q[i][burn_in], 1.0 / (n - burn_in));
                Eigen::JacobiSVD<Mat> svd(N.transpose() * D * N, Eigen::ComputeFullV);
                dirs[i] = N * svd.matrixV().col(svd.matrixV().cols() - 1);
            }
        }
        if (lam_x < lambda) {
            lambda = lam_x;
            rep.worst = refs[i];
            rep.worst_point = x;
            rep.worst_direction = dirs[i];
        }
    }
    rep.lambda = lambda;
    rep.pass = lambda > 1.0;
    rep.C_min = std::numeric_limits<double>::infinity();
    rep.C_max = 0.0;
    for (const auto& qi : q) {
        double c = std::numeric_limits<double>::infinity();
        for (int n = 0; n <= n_max; ++n) c = std::min(c, qi[n] / std::pow(lambda, n));
        rep.C_min = std::min(rep.C_min, c);
        rep.C_max = std::max(rep.C_max, c);
    }
    return rep;
}

// Quadratic forms making one iterate dominate: a leaf series summed until
// its tail bound drops below 1e-12 and a normal series of M + 1 terms.
struct AdaptedMetric {
    bool euclidean = false;
    int stratum = 0;
    int r = 1;
    int N = 1;
    double a = 0.9;
    int M = 0;
    int leaf_terms = 0;
    double c = 1.0;
    EndomorphismSpec f;
    std::vector<int> leaf_axes, normal_axes;
    std::vector<SampleRef> samples;
    std::vector<double> rx;

    // growth rate r(y) from the N-step bounds
    double rate(const Vec& y) const {
        Mat D = Mat::Identity(f.dim(), f.dim());
        Vec z = y;
        for (int k = 0; k < N; ++k) {
            D = eval_differential(f, z) * D;
            z = eval_map(f, z);
        }
        const double L = leaf_axes.empty() ? 0.0 : std::pow(op_norm(detail::block(D, leaf_axes, leaf_axes)), r);
        const double m = sigma_min(detail::block(D, normal_axes, normal_axes));
        return std::sqrt(std::pow(std::max(1.0, L), 1.0 / N) * std::pow(m, 1.0 / N));
    }

    // form in ambient coordinates at y; extra adds terms past the truncation
    Mat form(const Vec& y, int extra = 0, int m_override = std::numeric_limits<int>::min()) const {
        const int n = f.dim();
        if (euclidean) return Mat::Identity(n, n);
        const int M_use = m_override == std::numeric_limits<int>::min() ? M : m_override;
        const int d = static_cast<int>(leaf_axes.size()), cd = static_cast<int>(normal_axes.size());
        const int terms = std::max(leaf_axes.empty() ? 0 : leaf_terms + extra, M_use + 1);
        Mat G1 = Mat::Zero(d, d), G2 = Mat::Zero(cd, cd);
        // P_n = T^n / R_n^(1/r) on the leaf, Q_n = [T]^n / R_n on the normal quotient
        Vec z = y;
        double rz = rate(z);
        Mat P = Mat::Identity(d, d) / std::pow(rz, 1.0 / r);
        Mat Q = Mat::Identity(cd, cd) / rz;
        for (int k = 0; k < terms; ++k) {
            if (k < (leaf_axes.empty() ? 0 : leaf_terms + extra)) G1 += P.transpose() * P;
            if (k <= M_use) G2 += Q.transpose() * Q;
            const Mat D = eval_differential(f, z);
            z = eval_map(f, z);
            rz = rate(z);
            P = detail::block(D, leaf_axes, leaf_axes) * P / std::pow(rz, 1.0 / r);
            Q = detail::block(D, normal_axes, normal_axes) * Q / rz;
        }
        Mat G = Mat::Zero(n, n);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) G(leaf_axes[i], leaf_axes[j]) = G1(i, j);
        for (int i = 0; i < cd; ++i)
            for (int j = 0; j < cd; ++j) G(normal_axes[i], normal_axes[j]) = G2(i, j);
        return G;
    }
};

inline AdaptedMetric euclidean_metric(const SampledStratification& s, int stratum, const EndomorphismSpec& f, int r = 1) {
    AdaptedMetric m;
    m.euclidean = true;
    m.stratum = stratum;
    m.r = r;
    m.f = f;
    m.leaf_axes = s.strata[stratum].leaf_axes;
    m.normal_axes = s.strata[stratum].normal_axes;
    m.samples = s.samples(stratum);
    return m;
}

inline AdaptedMetric build_adapted_metric(const SampledStratification& s, int stratum, const EndomorphismSpec& f,
                                          int r = 1, int max_samples = 512) {
    const Stratum& st = s.strata[stratum];
    AdaptedMetric m;
    m.stratum = stratum;
    m.r = r;
    m.f = f;
    m.leaf_axes = st.leaf_axes;
    m.normal_axes = st.normal_axes;
    m.samples = subsample(s.samples(stratum), max_samples);
    if (st.codim() == 0) throw NoValidN("stratum " + st.name + " has no normal direction");
    const int n = f.dim();
    // N-step blocks for every sample, reused across the a ladder
    const int N_cap = 64;
    std::vector<std::vector<std::pair<double, double>>> lm(m.samples.size());
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        Vec z = s.point(m.samples[i]);
        Mat D = Mat::Identity(n, n);
        for (int k = 1; k <= N_cap; ++k) {
            D = eval_differential(f, z) * D;
            z = eval_map(f, z);
            const double L = st.dim > 0 ? std::pow(op_norm(detail::block(D, st.leaf_axes, st.leaf_axes)), r) : 0.0;
            lm[i].emplace_back(L, sigma_min(detail::block(D, st.normal_axes, st.normal_axes)));
        }
    }
    bool found = false;
    for (double a = 0.9; a < 1.0 - 1e-9 && !found; a += 0.025) {
        for (int N = 1; N <= N_cap && !found; ++N) {
            bool ok = true;
            for (const auto& v : lm) {
                const auto [L, mm] = v[N - 1];
                if (!(std::max(1.0, L) < std::pow(a, 2 * N) * mm)) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                m.a = a;
                m.N = N;
                found = true;
            }
        }
    }
    if (!found) throw NoValidN("no N <= 64 satisfies the domination inequality for stratum " + st.name);

    double C = 1.0;
    m.M = 0;
    for (const auto& ref : m.samples) {
        const Vec x = s.point(ref);
        const double rxv = m.rate(x);
        m.rx.push_back(rxv);
        const Mat D = eval_differential(f, x);
        C = std::max(C, rxv);
        if (st.dim > 0) C = std::max(C, op_norm(detail::block(D, st.leaf_axes, st.leaf_axes)));
        const double mn = sigma_min(detail::block(D, st.normal_axes, st.normal_axes));
        if (mn > 0.0) C = std::max(C, 1.0 / mn);
        // smallest M with m([T]^(M+1)) / R_(M+1) > 1 / r(x)
        Vec z = x;
        Mat Q = Mat::Identity(st.codim(), st.codim());
        double R = rxv;
        int Mx = 0;
        for (;; ++Mx) {
            const Mat Dz = eval_differential(f, z);
            Q = detail::block(Dz, st.normal_axes, st.normal_axes) * Q;
            z = eval_map(f, z);
            R *= m.rate(z);
            if (sigma_min(Q) / R > 1.0 / rxv) break;
            if (Mx > 256) throw NoValidN("normal series does not close for stratum " + st.name);
        }
        m.M = std::max(m.M, Mx);
    }
    m.c = std::pow(C, 4 * m.N) * std::pow(m.a, -2 * m.N);
    m.leaf_terms = st.dim > 0 ? static_cast<int>(std::ceil(std::log(1e-12 / m.c) / std::log(m.a))) + 1 : 0;
    m.leaf_terms = std::max(m.leaf_terms, st.dim > 0 ? 1 : 0);
    return m;
}

struct AdaptedCheck {
    bool pass = false;
    double worst_margin = 0.0;   // min over samples of lambda' * m' - max(1, L'^r)
    double worst_ratio = 0.0;    // measured lambda' = max over samples of max(1, L'^r) / m'
    bool normal_beats_rate = true;  // m' > r(x) where r(x) is known
    SampleRef worst;
};

// One-step inequality max(1, |Df*|'^r) |v|' < lambda' |[Df] v|' at every
// sample, evaluated as an exact generalized singular value problem.
inline AdaptedCheck verify_adapted(const AdaptedMetric& m, const SampledStratification& s, const EndomorphismSpec& f,
                                   double lambda_prime = 1.0, int m_override = std::numeric_limits<int>::min()) {
    AdaptedCheck out;
    out.worst_margin = std::numeric_limits<double>::infinity();
    const auto& la = m.leaf_axes;
    const auto& na = m.normal_axes;
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        const Vec x = s.point(m.samples[i]);
        const Vec y = eval_map(f, x);
        const Mat D = eval_differential(f, x);
        const Mat Gx = m.form(x, 0, m_override), Gy = m.form(y, 0, m_override);
        double leaf = 0.0;
        if (!la.empty()) {
            Mat rx, irx, ry, iry;
            double sx, sy;
            detail::sqrt_pair(detail::block(Gx, la, la), rx, irx, sx);
            detail::sqrt_pair(detail::block(Gy, la, la), ry, iry, sy);
            leaf = std::pow(op_norm(ry * detail::block(D, la, la) * irx), m.r);
        }
        Mat rx, irx, ry, iry;
        double sx, sy;
        detail::sqrt_pair(detail::block(Gx, na, na), rx, irx, sx);
        detail::sqrt_pair(detail::block(Gy, na, na), ry, iry, sy);
        double mprime = 0.0;
        if (sx > 1e-300 && sy > 1e-300) mprime = sigma_min(ry * detail::block(D, na, na) * irx);
        const double lhs = std::max(1.0, leaf);
        const double margin = lambda_prime * mprime - lhs;
        const double ratio = mprime > 0.0 ? lhs / mprime : std::numeric_limits<double>::infinity();
        if (!m.euclidean && i < m.rx.size() && !(mprime > m.rx[i])) out.normal_beats_rate = false;
        if (margin < out.worst_margin) {
            out.worst_margin = margin;
            out.worst = m.samples[i];
        }
        out.worst_ratio = std::max(out.worst_ratio, ratio);
    }
    out.pass = out.worst_margin > 0.0;
    return out;
}

// Open cones |v|' > eps |u|' for the metric eta * g_leaf + g_normal.
struct ConeField {
    int stratum = 0;
    double eps_cone = 1.0;
    double eta = 1.0;
    double lambda_cone = 1.0;
    double min_ratio = 0.0;  // smallest |v'| / (eps |u'|) over images of the fan
    double t0 = 0.0;         // C1 budget that keeps the certificate
    int fan_size = 0;
    int steps = 0;
    std::optional<AdaptedMetric> base;
    std::vector<SampleRef> samples;
};

namespace detail {

// points on the unit sphere S^(k-1), golden-angle spiral for k = 3
inline std::vector<Vec> sphere_points(int k, int count) {
    std::vector<Vec> out;
    if (k == 0) return {Vec::Zero(0)};
    if (k == 1) return {Vec::Constant(1, 1.0), Vec::Constant(1, -1.0)};
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
        Vec v = Vec::Zero(k);
        if (k == 2) {
            const double t = 2.0 * M_PI * i / count;
            v << std::cos(t), std::sin(t);
        } else {
            const double z = 1.0 - 2.0 * (i + 0.5) / count;
            const double rr = std::sqrt(1.0 - z * z);
            v[0] = rr * std::cos(golden * i);
            v[1] = rr * std::sin(golden * i);
            v[2] = z;
        }
        out.push_back(v);
    }
    return out;
}

struct ConeFan {
    std::vector<Vec> u, v;  // leaf part and normal part, in g'-orthonormal coordinates
};

// Closed-cone fan: boundary directions |v| = eps |u| plus interior rays up to the pure normal.
inline ConeFan cone_fan(int d, int c, double eps, int min_count) {
    ConeFan fan;
    const auto us = sphere_points(d, 16);
    const auto vs = sphere_points(c, 16);
    const double phi0 = std::atan(eps);
    const int rays = 8;
    while (static_cast<int>(fan.u.size()) < min_count) {
        fan.u.clear();
        fan.v.clear();
        for (int k = 0; k <= rays; ++k) {
            const double phi = phi0 + (0.5 * M_PI - phi0) * k / rays;
            for (const auto& a : us)
                for (const auto& b : vs) {
                    fan.u.push_back(std::cos(phi) * a);
                    fan.v.push_back(std::sin(phi) * b);
                }
        }
        break;
    }
    return fan;
}

struct ConeScan {
    bool invariant = true;
    double growth = std::numeric_limits<double>::infinity();
    double ratio = std::numeric_limits<double>::infinity();
};

inline ConeScan scan_cones(const ConeField& cf, const SampledStratification& s, const EndomorphismSpec& f,
                           const std::vector<Vec>& points, const std::vector<Vec>& bases) {
    const Stratum& st = s.strata[cf.stratum];
    const auto& la = st.leaf_axes;
    const auto& na = st.normal_axes;
    const auto fan = cone_fan(st.dim, st.codim(), cf.eps_cone, 32);
    ConeScan out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec& x = points[i];
        const Vec y = eval_map(f, x);
        const Mat D = eval_differential(f, x);
        Mat Gx = Mat::Identity(f.dim(), f.dim()), Gy = Gx;
        if (cf.base) {
            Gx = cf.base->form(bases[i]);
            Gy = cf.base->form(eval_map(f, bases[i]));
        }
        Mat rlx, irlx, rly, irly, rnx, irnx, rny, irny;
        double sm;
        if (!la.empty()) {
            sqrt_pair(block(Gx, la, la), rlx, irlx, sm);
            sqrt_pair(block(Gy, la, la), rly, irly, sm);
        }
        sqrt_pair(block(Gx, na, na), rnx, irnx, sm);
        sqrt_pair(block(Gy, na, na), rny, irny, sm);
        const double se = std::sqrt(cf.eta);
        for (std::size_t k = 0; k < fan.u.size(); ++k) {
            // back to ambient coordinates
            Vec w = Vec::Zero(f.dim());
            if (!la.empty()) {
                const Vec ul = irlx * fan.u[k] / se;
                for (std::size_t a = 0; a < la.size(); ++a) w[la[a]] = ul[a];
            }
            const Vec vn = irnx * fan.v[k];
            for (std::size_t a = 0; a < na.size(); ++a) w[na[a]] = vn[a];
            const Vec img = D * w;
            Vec iu(la.size()), iv(na.size());
            for (std::size_t a = 0; a < la.size(); ++a) iu[a] = img[la[a]];
            for (std::size_t a = 0; a < na.size(); ++a) iv[a] = img[na[a]];
            const double nu = la.empty() ? 0.0 : se * (rly * iu).norm();
            const double nv = (rny * iv).norm();
            const double norm_in = std::sqrt(fan.u[k].squaredNorm() + fan.v[k].squaredNorm());
            out.growth = std::min(out.growth, std::sqrt(nu * nu + nv * nv) / norm_in);
            if (!la.empty()) {
                const double rat = nu > 0.0 ? nv / (cf.eps_cone * nu) : std::numeric_limits<double>::infinity();
                out.ratio = std::min(out.ratio, rat);
                if (!(nv > cf.eps_cone * nu)) out.invariant = false;
            } else if (!(nv > 0.0)) {
                out.invariant = false;
            }
        }
    }
    return out;
}

}  // namespace detail

struct ConeCheck {
    bool invariant = false;
    double min_growth = 0.0;
    double min_ratio = 0.0;
    bool pass() const { return invariant && min_growth > 1.0; }
};

// Invariance and growth at every sample and at its translates by +-delta
// along each normal axis.
inline ConeCheck check_cone_invariance(const ConeField& c, const SampledStratification& s, const EndomorphismSpec& f,
                                       double delta = 0.0) {
    std::vector<Vec> pts, bases;
    for (const auto& ref : c.samples) {
        const Vec x = s.point(ref);
        pts.push_back(x);
        bases.push_back(x);
        if (delta > 0.0)
            for (int ax : s.strata[c.stratum].normal_axes)
                for (double sg : {-1.0, 1.0}) {
                    Vec y = x;
                    y[ax] += sg * delta;
                    pts.push_back(y);
                    bases.push_back(x);
                }
    }
    const auto scan = detail::scan_cones(c, s, f, pts, bases);
    ConeCheck out;
    out.invariant = scan.invariant;
    out.min_growth = scan.growth;
    out.min_ratio = scan.ratio;
    return out;
}

// eps = 1 and eta halved up to 40 times, first on the Euclidean metric and
// then on the adapted forms.
inline ConeField build_cone_field(const SampledStratification& s, int stratum, const EndomorphismSpec& f,
                                  int max_samples = 512) {
    ConeField cf;
    cf.stratum = stratum;
    cf.samples = subsample(s.samples(stratum), max_samples);
    const Stratum& st = s.strata[stratum];
    if (st.codim() == 0) throw ConeSearchFailed("stratum " + st.name + " has no normal direction");
    cf.fan_size = static_cast<int>(detail::cone_fan(st.dim, st.codim(), 1.0, 32).u.size());
    std::vector<Vec> pts;
    for (const auto& r : cf.samples) pts.push_back(s.point(r));
    auto attempt = [&](ConeField& c) {
        for (int k = 0; k < 40; ++k) {
            c.eta = std::ldexp(1.0, -k);
            c.steps = k + 1;
            const auto scan = detail::scan_cones(c, s, f, pts, pts);
            if (scan.invariant && scan.growth > 1.0) {
                c.lambda_cone = scan.growth;
                c.min_ratio = scan.ratio;
                const double slack = std::min(scan.growth - 1.0, std::isfinite(scan.ratio) ? scan.ratio - 1.0 : 1.0);
                c.t0 = 0.25 * slack;
                return true;
            }
            if (st.dim == 0) break;
        }
        return false;
    };
    if (attempt(cf)) return cf;
    try {
        cf.base = build_adapted_metric(s, stratum, f, 1, max_samples);
    } catch (const NoValidN& e) {
        throw ConeSearchFailed("no invariant cone field for stratum " + st.name + " (" + e.what() + ")");
    }
    if (attempt(cf)) return cf;
    throw ConeSearchFailed("no invariant cone field for stratum " + st.name + " after 40 halvings");
}

// Jets of plaques as graphs over the leaf tangent: v = l1 u + l2[u, u].
struct JetElement {
    int order = 1;
    std::vector<int> leaf_axes, normal_axes;
    Mat l1;               // codim x dim
    std::vector<Mat> l2;  // one symmetric dim x dim matrix per normal component
};

inline JetElement zero_jet(const SampledStratification& s, int stratum, int order) {
    JetElement j;
    j.order = order;
    j.leaf_axes = s.strata[stratum].leaf_axes;
    j.normal_axes = s.strata[stratum].normal_axes;
    const int d = static_cast<int>(j.leaf_axes.size()), c = static_cast<int>(j.normal_axes.size());
    j.l1 = Mat::Zero(c, d);
    if (order >= 2) j.l2.assign(c, Mat::Zero(d, d));
    return j;
}

// Pulls the jet l at f'(x) back to x through the r-jet of f' at x.
inline JetElement jet_transfer(const EndomorphismSpec& f, const Vec& x, const JetElement& l) {
    const Jet J = eval_jet(f, x, l.order);
    const auto& h = l.leaf_axes;
    const auto& v = l.normal_axes;
    const int d = static_cast<int>(h.size()), c = static_cast<int>(v.size());
    const Mat Ahh = detail::block(J.d1, h, h), Ahv = detail::block(J.d1, h, v);
    const Mat Avh = detail::block(J.d1, v, h), Avv = detail::block(J.d1, v, v);
    const Mat S = Avv - l.l1 * Ahv;
    if (c == 0 || sigma_min(S) < 1e-12 * std::max(1.0, op_norm(S)))
        throw SingularTransfer("normal block of the transfer is singular at the given point");
    const auto lu = S.fullPivLu();
    JetElement out = l;
    out.l1 = lu.solve(l.l1 * Ahh - Avh);
    if (l.order >= 2) {
        // W maps leaf coordinates u to the tangent of the pulled-back graph
        Mat W = Mat::Zero(f.dim(), d);
        for (int a = 0; a < d; ++a) W(h[a], a) = 1.0;
        for (int b = 0; b < c; ++b)
            for (int a = 0; a < d; ++a) W(v[b], a) = out.l1(b, a);
        Mat Eh = Mat::Zero(d, d);
        for (int i = 0; i < d; ++i) Eh.row(i) = J.d1.row(h[i]) * W;
        std::vector<Mat> rhs(c, Mat::Zero(d, d));
        for (int b = 0; b < c; ++b) {
            rhs[b] -= W.transpose() * J.d2[v[b]] * W;
            for (int i = 0; i < d; ++i) rhs[b] += l.l1(b, i) * (W.transpose() * J.d2[h[i]] * W);
            rhs[b] += Eh.transpose() * l.l2[b] * Eh;
        }
        out.l2.assign(c, Mat::Zero(d, d));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                Vec col(c);
                for (int b = 0; b < c; ++b) col[b] = rhs[b](i, j);
                const Vec sol = lu.solve(col);
                for (int b = 0; b < c; ++b) out.l2[b](i, j) = sol[b];
            }
    }
    return out;
}

inline nlohmann::json to_json(const ExpansionReport& r) {
    nlohmann::json j;
    j["check"] = "normal_expansion";
    j["pass"] = r.pass;
    j["lambda"] = r.lambda;
    j["C_min"] = r.C_min;
    j["worst_sample"] = {{"stratum", r.stratum}, {"plaque", r.worst.plaque}, {"node", r.worst.node}};
    j["parameters"] = {{"r", r.r}, {"n_max", r.n_max}, {"burn_in", r.burn_in}, {"samples", r.samples}, {"C_max", r.C_max}};
    return j;
}

inline nlohmann::json to_json(const AdaptedMetric& m, const AdaptedCheck& c, const std::string& name) {
    nlohmann::json j;
    j["check"] = "adapted_metric";
    j["pass"] = c.pass;
    j["lambda"] = c.worst_ratio;
    j["C_min"] = c.worst_margin;
    j["worst_sample"] = {{"stratum", name}, {"plaque", c.worst.plaque}, {"node", c.worst.node}};
    j["parameters"] = {{"N", m.N}, {"a", m.a}, {"M", m.M}, {"leaf_terms", m.leaf_terms}, {"samples", m.samples.size()}};
    return j;
}

inline nlohmann::json to_json(const ConeField& c, const ConeCheck& k, const std::string& name) {
    nlohmann::json j;
    j["check"] = "cone_field";
    j["pass"] = k.pass();
    j["lambda"] = k.min_growth;
    j["C_min"] = k.min_ratio;
    j["worst_sample"] = {{"stratum", name}};
    j["parameters"] = {{"eps_cone", c.eps_cone}, {"eta", c.eta}, {"fan", c.fan_size}, {"adapted_base", c.base.has_value()},
                       {"t0", c.t0}};
    return j;
}

}  // namespace lamina
