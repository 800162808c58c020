#pragma once

#include "core.hpp"

#include <algorithm>
#include <complex>
#include <limits>
#include <string>
#include <vector>

namespace lamina {

// C-infinity bump profile exp(1 - 1/(1 - s^2)) on (-1, 1), normalised so the
// peak value at s = 0 is 1.
struct Bump {
    static double value(double s) {
        if (std::abs(s) >= 1.0) return 0.0;
        return std::exp(1.0 - 1.0 / (1.0 - s * s));
    }
    static double d1(double s) {
        if (std::abs(s) >= 1.0) return 0.0;
        const double q = 1.0 - s * s;
        return value(s) * (-2.0 * s / (q * q));
    }
    static double d2(double s) {
        if (std::abs(s) >= 1.0) return 0.0;
        const double q = 1.0 - s * s;
        const double g1 = -2.0 * s / (q * q);
        const double g2 = -2.0 / (q * q) - 8.0 * s * s / (q * q * q);
        return value(s) * (g1 * g1 + g2);
    }
    // rises from 0 at s <= 0 to 1 at s >= 1, flat at both ends
    static double step(double s) {
        if (s <= 0.0) return 0.0;
        if (s >= 1.0) return 1.0;
        auto h = [](double u) { return u <= 0.0 ? 0.0 : std::exp(-1.0 / u); };
        const double a = h(s), b = h(1.0 - s);
        return a / (a + b);
    }
};

enum class Modulation { None, Cos, Sin };

// Additive perturbation t * rho(x) * direction.  rho is a product of bumps on
// the axes with a finite radius (radius <= 0 means the axis is unconstrained),
// optionally multiplied by cos or sin of one coordinate.
struct PerturbationSpec {
    double t = 0.0;
    Vec center;
    Vec radius;
    Vec direction;
    Modulation modulation = Modulation::None;
    int mod_axis = 0;
    double mod_freq = 1.0;
};

inline PerturbationSpec global_perturbation(int n, double t, const Vec& direction,
                                            Modulation m = Modulation::None, int axis = 0) {
    PerturbationSpec p;
    p.t = t;
    p.center = Vec::Zero(n);
    p.radius = Vec::Zero(n);
    p.direction = direction.normalized();
    p.modulation = m;
    p.mod_axis = axis;
    return p;
}

inline PerturbationSpec bump_perturbation(double t, const Vec& center, const Vec& radius,
                                          const Vec& direction) {
    PerturbationSpec p;
    p.t = t;
    p.center = center;
    p.radius = radius;
    p.direction = direction.normalized();
    return p;
}

struct Jet {
    int order = 1;
    Vec value;
    Mat d1;
    // d2[k] holds the symmetric Taylor coefficient of component k (half the Hessian)
    std::vector<Mat> d2;
};

enum class MapKind { PolyProduct, Viana };

struct EndomorphismSpec {
    std::string name;
    AmbientSpace ambient;
    MapKind kind = MapKind::PolyProduct;
    // PolyProduct: ascending coefficients of the polynomial acting on each axis
    std::vector<std::vector<double>> poly;
    // Viana: (z, h) -> (z^power, h^2 + c) with z = x + i y on axes 0, 1
    int viana_power = 4;
    double viana_c = -1.0;
    std::vector<PerturbationSpec> perturbations;

    int dim() const { return ambient.dim(); }
};

inline EndomorphismSpec poly_product(std::string name, AmbientSpace amb,
                                     std::vector<std::vector<double>> coeffs) {
    if (static_cast<int>(coeffs.size()) != amb.dim())
        throw std::invalid_argument("one polynomial per axis expected");
    EndomorphismSpec f;
    f.name = std::move(name);
    f.ambient = std::move(amb);
    f.kind = MapKind::PolyProduct;
    f.poly = std::move(coeffs);
    return f;
}

inline EndomorphismSpec viana_map(int power, double c) {
    EndomorphismSpec f;
    f.name = "viana-z" + std::to_string(power);
    f.ambient = AmbientSpace::euclidean(3);
    f.kind = MapKind::Viana;
    f.viana_power = power;
    f.viana_c = c;
    return f;
}

inline EndomorphismSpec linear_diag(std::vector<double> rates) {
    std::vector<std::vector<double>> c;
    for (double r : rates) c.push_back({0.0, r});
    return poly_product("linear", AmbientSpace::euclidean(static_cast<int>(rates.size())), c);
}

namespace detail {

inline void poly_eval(const std::vector<double>& c, double x, double& v, double& d1, double& d2) {
    v = d1 = d2 = 0.0;
    for (int k = static_cast<int>(c.size()) - 1; k >= 0; --k) {
        d2 = d2 * x + 2.0 * d1;
        d1 = d1 * x + v;
        v = v * x + c[k];
    }
}

struct PertTerms {
    double rho = 0.0;
    Vec grad;
    Mat hess;
};

inline PertTerms pert_terms(const AmbientSpace& amb, const PerturbationSpec& p, const Vec& x,
                            bool want_hess) {
    const int n = amb.dim();
    Vec d = amb.diff(x, p.center);
    std::vector<double> v(n, 1.0), g(n, 0.0), h(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const double r = p.radius.size() > i ? p.radius[i] : 0.0;
        if (r > 0.0) {
            const double s = d[i] / r;
            v[i] = Bump::value(s);
            g[i] = Bump::d1(s) / r;
            h[i] = Bump::d2(s) / (r * r);
        }
    }
    if (p.modulation != Modulation::None) {
        const int a = p.mod_axis;
        const double w = p.mod_freq;
        const double th = w * x[a];
        double mv, mg, mh;
        if (p.modulation == Modulation::Cos) {
            mv = std::cos(th); mg = -w * std::sin(th); mh = -w * w * std::cos(th);
        } else {
            mv = std::sin(th); mg = w * std::cos(th); mh = -w * w * std::sin(th);
        }
        // fold the modulation into the factor of its axis
        const double v0 = v[a], g0 = g[a], h0 = h[a];
        v[a] = v0 * mv;
        g[a] = g0 * mv + v0 * mg;
        h[a] = h0 * mv + 2.0 * g0 * mg + v0 * mh;
    }
    PertTerms out;
    out.rho = 1.0;
    for (int i = 0; i < n; ++i) out.rho *= v[i];
    out.grad = Vec::Zero(n);
    for (int i = 0; i < n; ++i) {
        double prod = g[i];
        for (int j = 0; j < n; ++j)
            if (j != i) prod *= v[j];
        out.grad[i] = prod;
    }
    if (want_hess) {
        out.hess = Mat::Zero(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double prod = 1.0;
                for (int k = 0; k < n; ++k) {
                    if (i == j && k == i) prod *= h[k];
                    else if (k == i || k == j) prod *= g[k];
                    else prod *= v[k];
                }
                out.hess(i, j) = prod;
            }
    }
    return out;
}

// raw jet of the unperturbed part, without circle wrap
inline Jet base_jet(const EndomorphismSpec& f, const Vec& x, int order) {
    const int n = f.dim();
    Jet j;
    j.order = order;
    j.value = Vec::Zero(n);
    j.d1 = Mat::Zero(n, n);
    if (order >= 2) j.d2.assign(n, Mat::Zero(n, n));
    if (f.kind == MapKind::PolyProduct) {
        for (int i = 0; i < n; ++i) {
            double v, d1, d2;
            poly_eval(f.poly[i], x[i], v, d1, d2);
            j.value[i] = v;
            j.d1(i, i) = d1;
            if (order >= 2) j.d2[i](i, i) = 0.5 * d2;
        }
    } else {
        const std::complex<double> z(x[0], x[1]);
        const int k = f.viana_power;
        const std::complex<double> zk = std::pow(z, k);
        const std::complex<double> dz = static_cast<double>(k) * std::pow(z, k - 1);
        j.value << zk.real(), zk.imag(), x[2] * x[2] + f.viana_c;
        j.d1(0, 0) = dz.real();  j.d1(0, 1) = -dz.imag();
        j.d1(1, 0) = dz.imag();  j.d1(1, 1) = dz.real();
        j.d1(2, 2) = 2.0 * x[2];
        if (order >= 2) {
            const std::complex<double> ddz =
                k >= 2 ? static_cast<double>(k * (k - 1)) * std::pow(z, k - 2)
                       : std::complex<double>(0.0, 0.0);
            const double a = ddz.real(), b = ddz.imag();
            j.d2[0](0, 0) = 0.5 * a;  j.d2[0](0, 1) = j.d2[0](1, 0) = -0.5 * b;  j.d2[0](1, 1) = -0.5 * a;
            j.d2[1](0, 0) = 0.5 * b;  j.d2[1](0, 1) = j.d2[1](1, 0) = 0.5 * a;   j.d2[1](1, 1) = -0.5 * b;
            j.d2[2](2, 2) = 1.0;
        }
    }
    return j;
}

}  // namespace detail

inline Jet eval_jet(const EndomorphismSpec& f, const Vec& x, int r) {
    if (r < 1 || r > 2) throw UnsupportedOrder("jets are available for r = 1 and r = 2 only, got r = " + std::to_string(r));
    Jet j = detail::base_jet(f, x, r);
    for (const auto& p : f.perturbations) {
        if (p.t == 0.0) continue;
        const auto terms = detail::pert_terms(f.ambient, p, x, r >= 2);
        j.value += p.t * terms.rho * p.direction;
        j.d1 += p.t * p.direction * terms.grad.transpose();
        if (r >= 2)
            for (int k = 0; k < f.dim(); ++k) j.d2[k] += 0.5 * p.t * p.direction[k] * terms.hess;
    }
    j.value = f.ambient.wrap(j.value);
    return j;
}

inline Vec eval_map(const EndomorphismSpec& f, const Vec& x) {
    Vec y = detail::base_jet(f, x, 1).value;
    for (const auto& p : f.perturbations) {
        if (p.t == 0.0) continue;
        y += p.t * detail::pert_terms(f.ambient, p, x, false).rho * p.direction;
    }
    return f.ambient.wrap(y);
}

inline Mat eval_differential(const EndomorphismSpec& f, const Vec& x) { return eval_jet(f, x, 1).d1; }

inline EndomorphismSpec perturb(const EndomorphismSpec& f, const PerturbationSpec& p) {
    EndomorphismSpec g = f;
    const int n = f.dim();
    PerturbationSpec q = p;
    if (q.center.size() != n) q.center = Vec::Zero(n);
    if (q.radius.size() != n) q.radius = Vec::Zero(n);
    if (q.direction.size() != n) throw std::invalid_argument("perturbation direction has wrong dimension");
    const double dn = q.direction.norm();
    if (dn > 0.0) q.direction /= dn;
    g.perturbations.push_back(q);
    return g;
}

// C0 and C1 bounds of t*rho*direction: |t| * sup rho and |t| * sup |grad rho|
inline double perturbation_c0_bound(const PerturbationSpec& p) { return std::abs(p.t); }

inline double perturbation_c1_bound(const PerturbationSpec& p) {
    // sup |Bump'| is attained where the profile is steepest; bound numerically once
    static const double bump_slope = [] {
        double m = 0.0;
        for (int i = 1; i < 20000; ++i) m = std::max(m, std::abs(Bump::d1(-1.0 + i * 1e-4)));
        return m * 1.001;
    }();
    double s = 0.0;
    for (int i = 0; i < p.radius.size(); ++i)
        if (p.radius[i] > 0.0) s += (bump_slope / p.radius[i]) * (bump_slope / p.radius[i]);
    if (p.modulation != Modulation::None) s += p.mod_freq * p.mod_freq;
    return std::abs(p.t) * std::sqrt(s);
}

// max abs entry of (analytic Jacobian - central differences)
inline double fd_consistency(const EndomorphismSpec& f, const Vec& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("fd_consistency needs h > 0");
    const int n = f.dim();
    const Mat J = eval_differential(f, x);
    double worst = 0.0;
    for (int j = 0; j < n; ++j) {
        Vec xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const Vec col = f.ambient.diff(eval_map(f, xp), eval_map(f, xm)) / (2.0 * h);
        worst = std::max(worst, (col - J.col(j)).cwiseAbs().maxCoeff());
    }
    return worst;
}

}  // namespace lamina
