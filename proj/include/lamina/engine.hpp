#pragma once

#include "dynamics.hpp"
#include "interp.hpp"
#include "strata.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>
#include <vector>

namespace lamina {

// Displacement of every node of every plaque, as an ambient vector.
struct EmbeddingField {
    std::vector<std::vector<std::vector<Vec>>> disp;

    static EmbeddingField zero(const SampledStratification& s) {
        EmbeddingField e;
        e.disp.resize(s.size());
        for (int i = 0; i < s.size(); ++i) {
            e.disp[i].resize(s.strata[i].plaques.size());
            for (std::size_t p = 0; p < s.strata[i].plaques.size(); ++p)
                e.disp[i][p].assign(s.strata[i].plaques[p].box.nodes(), Vec::Zero(s.ambient.dim()));
        }
        return e;
    }

    Vec point(const SampledStratification& s, int st, int p, int node) const {
        return s.ambient.wrap(s.node_point(st, p, node) + disp[st][p][node]);
    }
};

struct NodeId {
    int stratum, plaque, node;
};

inline std::vector<NodeId> all_nodes(const SampledStratification& s) {
    std::vector<NodeId> out;
    for (int i = 0; i < s.size(); ++i)
        for (int p = 0; p < static_cast<int>(s.strata[i].plaques.size()); ++p)
            for (int k = 0; k < s.strata[i].plaques[p].box.nodes(); ++k) out.push_back({i, p, k});
    return out;
}

// How one node is computed: the graph transform of its ring stratum,
// blended towards the transforms of the lower strata whose tube it sits in.
struct NodePlan {
    int ring = 0;
    std::vector<int> collars;  // descending
    std::vector<double> rho;   // 1 near the collar stratum, 0 at the tube edge
    int fiber = 0;             // lowest stratum involved; displacements live in its normal span
    bool halo = false;
    int copy_from = -1;        // halo nodes copy this node of the same plaque
    bool trivial = false;      // top-dimensional ring, no collar: displacement stays 0
};

struct Filtration {
    double theta = 0.5;
    int M = 1;
    std::vector<NodeId> nodes;
    std::vector<NodePlan> plan;
    std::vector<int> ring_count;    // nodes per ring
    double margin = std::numeric_limits<double>::infinity();  // min over ring p >= 1 of nu_q(f y) - theta
    int outside_tube = 0;           // ring nodes of a lower stratum lying outside its tube
    double transversality = std::numeric_limits<double>::infinity();
};

namespace detail {

inline double nu(const SampledStratification& s, int q, const Vec& z) {
    for (int i = 0; i < z.size(); ++i)
        if (!std::isfinite(z[i])) return std::numeric_limits<double>::infinity();
    return s.strata[q].distance(z) / s.strata[q].tube_width;
}

inline double collar_weight(double v) { return 1.0 - Bump::step((v - 0.75) / 0.25); }

inline Mat normal_block(const SampledStratification& s, int p, const Mat& D) {
    const auto& na = s.strata[p].normal_axes;
    Mat b(na.size(), na.size());
    for (std::size_t i = 0; i < na.size(); ++i)
        for (std::size_t j = 0; j < na.size(); ++j) b(i, j) = D(na[i], na[j]);
    return b;
}

inline void check_order(const SampledStratification& s) {
    for (int i = 0; i < s.size(); ++i)
        for (int j = 0; j < s.size(); ++j)
            if (i != j && s.incidence[i][j] && i > j)
                throw StrataOrderViolation(s.strata[i].name + " lies in the closure of " + s.strata[j].name +
                                           " but is indexed after it");
}

template <class Fn>
void parallel_for(int n, Fn fn) {
    const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const int workers = std::min(hw, std::max(1, n / 256));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errs(workers);
    std::vector<int> err_at(workers, -1);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            const int lo = static_cast<int>(static_cast<long>(n) * w / workers);
            const int hi = static_cast<int>(static_cast<long>(n) * (w + 1) / workers);
            for (int i = lo; i < hi; ++i) {
                try {
                    fn(i);
                } catch (...) {
                    errs[w] = std::current_exception();
                    err_at[w] = i;
                    return;
                }
            }
        });
    for (auto& t : pool) t.join();
    // lowest index wins so failures are reported deterministically
    for (int w = 0; w < workers; ++w)
        if (errs[w]) std::rethrow_exception(errs[w]);
}

}  // namespace detail

// Rings and collars.  nu_q(z) = dist(z, X_q) / w_q.  The ring of a node y of
// X_h is the largest p <= h whose lower strata q < p (in the closure of X_h)
// stay at nu_q >= theta along f^n(y), n <= M; M doubles until the rings
// stop changing.
namespace detail {

// nearest closure node of the plaque in grid index distance, lowest flat
// index on ties; windows grow until no farther node can win
inline int nearest_closure_node(const Plaque& P, int node) {
    const auto mi = P.box.unflatten(node);
    const int d = static_cast<int>(mi.size());
    int widest = 0;
    for (int a = 0; a < d; ++a) widest = std::max(widest, P.box.count[a]);
    for (int R = 1; R <= widest; ++R) {
        double best = std::numeric_limits<double>::infinity();
        int arg = -1;
        std::vector<int> off(d, -R);
        while (true) {
            bool inside = true;
            int k = 0, stride = 1;
            double dist = 0.0;
            for (int a = 0; a < d; ++a) {
                const int c = mi[a] + off[a];
                if (c < 0 || c >= P.box.count[a]) inside = false;
                k += c * stride;
                stride *= P.box.count[a];
                dist += double(off[a]) * off[a];
            }
            if (inside && P.in_closure[k] && (dist < best || (dist == best && k < arg))) {
                best = dist;
                arg = k;
            }
            int a = 0;
            while (a < d && ++off[a] > R) {
                off[a] = -R;
                ++a;
            }
            if (a == d) break;
        }
        if (arg >= 0 && best <= double(R) * R) return arg;
    }
    return -1;
}

}  // namespace detail

inline Filtration build_filtration(const SampledStratification& s, const EndomorphismSpec& f, double theta = 0.5) {
    detail::check_order(s);
    Filtration F;
    F.theta = theta;
    F.nodes = all_nodes(s);
    const int n = static_cast<int>(F.nodes.size());
    const int m = s.size();
    F.plan.assign(n, NodePlan{});
    // running minima of nu_q over the orbit prefix, per node
    std::vector<std::vector<double>> mins(n, std::vector<double>(m, std::numeric_limits<double>::infinity()));
    std::vector<Vec> cur(n);
    std::vector<unsigned char> halo(n, 0);
    for (int i = 0; i < n; ++i) {
        const auto& id = F.nodes[i];
        const Plaque& pl = s.strata[id.stratum].plaques[id.plaque];
        halo[i] = !pl.on_stratum[id.node] && !pl.in_closure[id.node];
        cur[i] = s.node_point(id.stratum, id.plaque, id.node);
    }
    auto extend = [&](int from, int to) {
        detail::parallel_for(n, [&](int i) {
            if (halo[i]) return;
            const int h = F.nodes[i].stratum;
            for (int k = from; k <= to; ++k) {
                if (k > 0) cur[i] = eval_map(f, cur[i]);
                for (int q = 0; q < h; ++q)
                    if (s.incidence[q][h]) mins[i][q] = std::min(mins[i][q], detail::nu(s, q, cur[i]));
            }
        });
    };
    auto rings = [&]() {
        std::vector<int> r(n, 0);
        for (int i = 0; i < n; ++i) {
            if (halo[i]) continue;
            const int h = F.nodes[i].stratum;
            int best = 0;
            for (int p = h; p >= 0; --p) {
                if (!s.incidence[p][h]) continue;
                bool ok = true;
                for (int q = 0; q < p && ok; ++q)
                    if (s.incidence[q][h] && mins[i][q] < theta) ok = false;
                if (ok) {
                    best = p;
                    break;
                }
            }
            r[i] = best;
        }
        return r;
    };
    extend(0, 1);
    int M = 1;
    auto r = rings();
    while (true) {
        if (M > 256) throw FiltrationFailed("rings did not stabilise for M <= 256");
        extend(M + 1, 2 * M);
        auto r2 = rings();
        if (r2 == r) break;
        r = std::move(r2);
        M *= 2;
    }
    F.M = M;
    F.ring_count.assign(m, 0);
    for (int i = 0; i < n; ++i) {
        const auto& id = F.nodes[i];
        NodePlan& pl = F.plan[i];
        const Plaque& P = s.strata[id.stratum].plaques[id.plaque];
        if (halo[i]) {
            pl.halo = true;
            pl.copy_from = detail::nearest_closure_node(P, id.node);
            continue;
        }
        pl.ring = r[i];
        ++F.ring_count[pl.ring];
        const Vec y = s.node_point(id.stratum, id.plaque, id.node);
        for (int q = pl.ring - 1; q >= 0; --q) {
            if (!s.incidence[q][pl.ring]) continue;
            const double v = detail::nu(s, q, y);
            if (v < 1.0) {
                pl.collars.push_back(q);
                pl.rho.push_back(detail::collar_weight(v));
            }
        }
        pl.fiber = pl.collars.empty() ? pl.ring : pl.collars.back();
        pl.trivial = s.strata[pl.ring].codim() == 0 && pl.collars.empty();
        if (pl.ring < id.stratum && !(detail::nu(s, pl.ring, y) < 1.0)) ++F.outside_tube;
        if (s.strata[pl.ring].codim() > 0) {
            const Mat D = eval_differential(f, y);
            F.transversality = std::min(F.transversality, sigma_min(detail::normal_block(s, pl.ring, D)));
        }
        if (pl.ring > 0) {
            const Vec fy = eval_map(f, y);
            for (int q = 0; q < pl.ring; ++q)
                if (s.incidence[q][id.stratum]) F.margin = std::min(F.margin, detail::nu(s, q, fy) - theta);
        }
    }
    return F;
}

struct EngineContext {
    const SampledStratification* s = nullptr;
    const EndomorphismSpec* f = nullptr;
    const EndomorphismSpec* fp = nullptr;
    double eta_prime = 0.05;
    double newton_tol = 1e-13;
};

struct StepResult {
    Vec disp;          // ambient displacement of the solved point from the node
    int image_plaque = -1;
    Vec u;             // home-leaf coordinates of the target in the image plaque
    int steps = 0;
    double residual = 0.0;
};

namespace detail {

struct Target {
    Vec value;  // gamma + D(gamma)
    Mat grad;   // derivative along the selected home-leaf axes
};

// gamma(u) = g0 with the home-leaf coordinates listed in sel replaced by u,
// pushed by the field of plaque Q
inline Target target_on(const SampledStratification& s, const EmbeddingField& field, int home, int Q, const Vec& g0,
                        const std::vector<int>& sel_axes, const Vec& u, bool want_grad) {
    const Stratum& H = s.strata[home];
    const Plaque& P = H.plaques[Q];
    Vec gam = g0;
    for (std::size_t j = 0; j < sel_axes.size(); ++j) gam[sel_axes[j]] = u[j];
    PlaqueInterpolant ip{&P.box, &field.disp[home][Q]};
    std::vector<double> uq(H.dim);
    for (int a = 0; a < H.dim; ++a) uq[a] = gam[H.leaf_axes[a]];
    const auto r = ip.eval(uq, want_grad);
    Target t;
    t.value = gam + r.value;
    if (want_grad) {
        const int n = static_cast<int>(g0.size());
        t.grad = Mat::Zero(n, sel_axes.size());
        for (std::size_t j = 0; j < sel_axes.size(); ++j) {
            t.grad(sel_axes[j], j) = 1.0;
            for (int a = 0; a < H.dim; ++a)
                if (H.leaf_axes[a] == sel_axes[j]) t.grad.col(j) += r.grad.col(a);
        }
    }
    return t;
}

}  // namespace detail

// S0 for stratum p at node y of the home stratum: the point b + N_p s whose
// f'-image lies on the current image of the home plaque of f(y), inside the
// p-fiber of f(b).  b = y + shift with shift along the leaf axes of p's ring.
inline StepResult graph_transform_step(const EngineContext& ctx, const EmbeddingField& field, int p, const NodeId& id,
                                       const Vec* shift = nullptr, const Vec* warm = nullptr) {
    const SampledStratification& s = *ctx.s;
    const Stratum& H = s.strata[id.stratum];
    const Stratum& R = s.strata[p];
    const int n = s.ambient.dim();
    const int c = R.codim(), d = R.dim;
    const Plaque& P = H.plaques[id.plaque];
    StepResult out;
    out.image_plaque = P.image;
    if (P.image < 0) throw OrbitLeavesSamples("plaque " + P.code + " of " + H.name + " has no sampled image");
    const Vec y = s.node_point(id.stratum, id.plaque, id.node);
    Vec b = y;
    if (shift) b += *shift;
    const Vec g0 = eval_map(*ctx.f, b);
    if (c == 0) {
        out.disp = shift ? *shift : Vec::Zero(n);
        return out;
    }
    const Mat N = s.normal(p);
    Vec sv = Vec::Zero(c);
    if (warm) {
        Vec w = *warm;
        if (shift) w -= *shift;
        sv = N.transpose() * w;
    }
    Vec u(d);
    {
        const Vec z0 = eval_map(*ctx.fp, b + N * sv);
        for (int j = 0; j < d; ++j) u[j] = z0[R.leaf_axes[j]];
    }
    double res = std::numeric_limits<double>::infinity();
    int k = 0;
    for (; k <= 50; ++k) {
        const Vec z = b + N * sv;
        const Vec fz = eval_map(*ctx.fp, z);
        const auto tg = detail::target_on(s, field, id.stratum, P.image, g0, R.leaf_axes, u, true);
        const Vec F = s.ambient.diff(fz, tg.value);
        res = F.lpNorm<Eigen::Infinity>();
        if (res <= ctx.newton_tol) break;
        if (k == 50) break;
        Mat J(n, n);
        J.leftCols(c) = eval_differential(*ctx.fp, z) * N;
        J.rightCols(d) = -tg.grad;
        Eigen::FullPivLU<Mat> lu(J);
        if (lu.rank() < n) throw SingularJacobian("graph transform Jacobian is singular at a node of " + H.name);
        const Vec step = lu.solve(-F);
        sv += step.head(c);
        u += step.tail(d);
        if (!std::isfinite(sv.squaredNorm() + u.squaredNorm()))
            throw NewtonDiverged("graph transform Newton iterate is not finite at a node of " + H.name);
        if (step.lpNorm<Eigen::Infinity>() < 1e-15 && res < 1e-11) break;
    }
    if (res > ctx.newton_tol && !(res < 1e-11)) {
        if (!(d == 0 && c == 1))
            throw NewtonDiverged("graph transform Newton did not reach the tolerance at a node of " + H.name);
        // bisection along the one-dimensional fiber
        auto g = [&](double t) {
            const Vec fz = eval_map(*ctx.fp, b + N * Vec::Constant(1, t));
            const auto tg = detail::target_on(s, field, id.stratum, P.image, g0, R.leaf_axes, u, false);
            return s.ambient.diff(fz, tg.value)[R.normal_axes[0]];
        };
        double lo = -ctx.eta_prime, hi = ctx.eta_prime;
        double glo = g(lo), ghi = g(hi);
        if (glo * ghi > 0.0) throw NewtonDiverged("no sign change along the fiber at a node of " + H.name);
        for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double gm = g(mid);
            if ((gm < 0.0) == (glo < 0.0)) {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        sv[0] = 0.5 * (lo + hi);
        res = std::abs(g(sv[0]));
    }
    const Vec ns = N * sv;
    if (ns.norm() > ctx.eta_prime)
        throw FiberCapExceeded("fiber displacement " + fmt17(ns.norm()) + " exceeds eta' = " + fmt17(ctx.eta_prime) +
                               " at a node of " + H.name);
    out.disp = shift ? Vec(*shift + ns) : ns;
    out.steps = k;
    out.residual = res;
    out.u = Vec(H.dim);
    Vec gam = g0;
    for (int j = 0; j < d; ++j) gam[R.leaf_axes[j]] = u[j];
    for (int a = 0; a < H.dim; ++a) out.u[a] = gam[H.leaf_axes[a]];
    return out;
}

// Blend from v towards w by weight rho and retract onto the home lamination
// through the ring transform at the blended leaf position.
inline Vec glue_blend(const EngineContext& ctx, const EmbeddingField& field, const NodeId& id, int ring,
                      const Vec& v, const Vec& w, double rho) {
    if (rho <= 0.0) return v;
    if (rho >= 1.0) return w;
    const Stratum& R = ctx.s->strata[ring];
    const Vec mix = v + rho * (w - v);
    Vec ell = Vec::Zero(mix.size());
    for (int a : R.leaf_axes) ell[a] = mix[a];
    StepResult r;
    try {
        r = graph_transform_step(ctx, field, ring, id, &ell, &mix);
    } catch (const FiberCapExceeded& e) {
        throw RetractionFailed(std::string("blend left the fiber cap: ") + e.what());
    }
    if ((r.disp - ell).norm() > ctx.eta_prime) throw RetractionFailed("retraction moved farther than eta'");
    return r.disp;
}

inline Vec composite_value(const EngineContext& ctx, const EmbeddingField& field, const NodeId& id,
                           const NodePlan& plan) {
    const int n = ctx.s->ambient.dim();
    if (plan.trivial) return Vec::Zero(n);
    const Vec& warm = field.disp[id.stratum][id.plaque][id.node];
    Vec v = graph_transform_step(ctx, field, plan.ring, id, nullptr, &warm).disp;
    for (std::size_t k = 0; k < plan.collars.size(); ++k) {
        if (plan.rho[k] <= 0.0) continue;
        const Vec w = graph_transform_step(ctx, field, plan.collars[k], id, nullptr, &warm).disp;
        v = glue_blend(ctx, field, id, plan.ring, v, w, plan.rho[k]);
    }
    return v;
}

struct ConvergenceTrace {
    int stratum = -1;  // step index; -1 for the final sweep over everything
    int active = 0;
    std::vector<double> d;      // sup update per sweep
    std::vector<double> ratio;  // d_k / d_(k-1)
    double lambda_bound = 0.0;  // sup leaf rate / inf normal rate over the active rings
    int iterations() const { return static_cast<int>(d.size()); }
    // largest ratio past the first three sweeps with both updates above 1e-12
    double contraction() const {
        double r = 0.0;
        for (std::size_t k = 3; k < d.size(); ++k)
            if (d[k] >= 1e-12 && d[k - 1] >= 1e-12) r = std::max(r, d[k] / d[k - 1]);
        return r;
    }
};

// Jacobi sweeps over the active nodes until the sup update drops below tol.
inline ConvergenceTrace iterate_stratum(const EngineContext& ctx, const Filtration& F, const std::vector<int>& active,
                                        EmbeddingField& field, double tol, int step_id) {
    ConvergenceTrace tr;
    tr.stratum = step_id;
    tr.active = static_cast<int>(active.size());
    if (active.empty()) return tr;
    const SampledStratification& s = *ctx.s;
    double lam = 0.0, leaf_sup = 0.0, normal_inf = std::numeric_limits<double>::infinity();
    for (int i : active) {
        const auto& id = F.nodes[i];
        const auto& pl = F.plan[i];
        if (pl.trivial || pl.halo) continue;
        const Vec y = s.node_point(id.stratum, id.plaque, id.node);
        const Mat D = eval_differential(*ctx.f, y);
        const double m = sigma_min(detail::normal_block(s, pl.ring, D));
        lam = std::max(lam, m > 0.0 ? 1.0 / m : 1.0);
        normal_inf = std::min(normal_inf, m);
        const auto& la = s.strata[pl.ring].leaf_axes;
        Mat L(la.size(), la.size());
        for (std::size_t a = 0; a < la.size(); ++a)
            for (std::size_t b = 0; b < la.size(); ++b) L(a, b) = D(la[a], la[b]);
        leaf_sup = std::max(leaf_sup, la.empty() ? 1.0 : op_norm(L));
    }
    tr.lambda_bound = std::isfinite(normal_inf) && normal_inf > 0.0 ? leaf_sup / normal_inf : 0.0;
    lam = std::clamp(lam, 0.05, 0.995);
    const int cap = static_cast<int>(std::ceil(10.0 * std::log(1.0 / tol) / std::log(1.0 / lam))) + 5;
    std::vector<Vec> next(active.size());
    for (int sweep = 0;; ++sweep) {
        if (sweep >= cap)
            throw NoConvergence("no convergence after " + std::to_string(cap) + " sweeps (last update " +
                                fmt17(tr.d.empty() ? 0.0 : tr.d.back()) + ")");
        detail::parallel_for(static_cast<int>(active.size()), [&](int j) {
            const int i = active[j];
            if (F.plan[i].halo) return;
            next[j] = composite_value(ctx, field, F.nodes[i], F.plan[i]);
        });
        double dk = 0.0;
        for (std::size_t j = 0; j < active.size(); ++j) {
            const int i = active[j];
            if (F.plan[i].halo) continue;
            const auto& id = F.nodes[i];
            Vec& cur = field.disp[id.stratum][id.plaque][id.node];
            dk = std::max(dk, (next[j] - cur).lpNorm<Eigen::Infinity>());
            cur = next[j];
        }
        for (int i : active)
            if (F.plan[i].halo && F.plan[i].copy_from >= 0) {
                const auto& id = F.nodes[i];
                field.disp[id.stratum][id.plaque][id.node] = field.disp[id.stratum][id.plaque][F.plan[i].copy_from];
            }
        if (!tr.d.empty()) tr.ratio.push_back(tr.d.back() > 0.0 ? dk / tr.d.back() : 0.0);
        tr.d.push_back(dk);
        if (dk < tol) break;
    }
    return tr;
}

struct PullbackEntry {
    int plaque = -1;
    Vec u;
    double residual = 0.0;
    double leaf_distance = 0.0;
};

struct PersistenceResult {
    EmbeddingField field;
    std::vector<std::vector<std::vector<PullbackEntry>>> pullback;
    Filtration filtration;
    std::vector<ConvergenceTrace> traces;
    int iterations = 0;
    double contraction_ratio = 0.0;
    double residual_max = 0.0;
    double displacement_sup = 0.0;
    double leaf_distance_max = 0.0;
    double fiber_defect = 0.0;  // largest displacement component outside the fiber normal span
    NodeCloud cloud;            // perturbed node positions
};

// Leaf coordinates u of f'*(y) in the image plaque: the home-leaf part of
// f'(i'(y)) = gamma(u) + D(gamma(u)) solved by Newton; the residual is the
// full mismatch.
inline PullbackEntry extract_pullback(const EngineContext& ctx, const EmbeddingField& field, const NodeId& id) {
    const SampledStratification& s = *ctx.s;
    const Stratum& H = s.strata[id.stratum];
    const Plaque& P = H.plaques[id.plaque];
    PullbackEntry e;
    e.plaque = P.image;
    const Vec y = s.node_point(id.stratum, id.plaque, id.node);
    const Vec fz = eval_map(*ctx.fp, y + field.disp[id.stratum][id.plaque][id.node]);
    const Vec g0 = eval_map(*ctx.f, y);
    Vec u(H.dim);
    for (int a = 0; a < H.dim; ++a) u[a] = fz[H.leaf_axes[a]];
    for (int k = 0; k < 50 && H.dim > 0; ++k) {
        const auto tg = detail::target_on(s, field, id.stratum, P.image, g0, H.leaf_axes, u, true);
        const Vec F = s.ambient.diff(fz, tg.value);
        Vec G(H.dim);
        Mat J(H.dim, H.dim);
        for (int a = 0; a < H.dim; ++a) {
            G[a] = F[H.leaf_axes[a]];
            J.row(a) = -tg.grad.row(H.leaf_axes[a]);
        }
        if (G.lpNorm<Eigen::Infinity>() < 1e-15) break;
        const Vec step = J.fullPivLu().solve(-G);
        u += step;
        if (step.lpNorm<Eigen::Infinity>() < 1e-16) break;
    }
    const auto tg = detail::target_on(s, field, id.stratum, P.image, g0, H.leaf_axes, u, false);
    e.residual = s.ambient.diff(fz, tg.value).norm();
    e.u = u;
    Vec gu = g0;
    for (int a = 0; a < H.dim; ++a) gu[H.leaf_axes[a]] = u[a];
    e.leaf_distance = s.ambient.dist(gu, g0);
    return e;
}

// Steps p = top .. 0 on the nodes whose fiber stratum is p, then sweeps over
// everything until the sup update is below tol again.
inline PersistenceResult persist_stratification(const SampledStratification& s, const EndomorphismSpec& f,
                                                const EndomorphismSpec& fp, double eta_prime, double tol = 1e-12,
                                                const Filtration* pre = nullptr) {
    detail::check_order(s);
    PersistenceResult R;
    R.filtration = pre ? *pre : build_filtration(s, f);
    const Filtration& F = R.filtration;
    EngineContext ctx{&s, &f, &fp, eta_prime};
    R.field = EmbeddingField::zero(s);
    const int n = static_cast<int>(F.nodes.size());
    for (int p = s.size() - 1; p >= 0; --p) {
        std::vector<int> active;
        for (int i = 0; i < n; ++i)
            if (F.plan[i].halo || F.plan[i].fiber == p) active.push_back(i);
        R.traces.push_back(iterate_stratum(ctx, F, active, R.field, tol, p));
    }
    std::vector<int> everything(n);
    for (int i = 0; i < n; ++i) everything[i] = i;
    R.traces.push_back(iterate_stratum(ctx, F, everything, R.field, tol, -1));
    for (const auto& t : R.traces) {
        R.iterations += t.iterations();
        R.contraction_ratio = std::max(R.contraction_ratio, t.contraction());
    }
    R.pullback.resize(s.size());
    R.cloud.resize(s.size());
    for (int i = 0; i < s.size(); ++i) {
        R.pullback[i].resize(s.strata[i].plaques.size());
        R.cloud[i].resize(s.strata[i].plaques.size());
        for (std::size_t p = 0; p < s.strata[i].plaques.size(); ++p) {
            R.pullback[i][p].resize(s.strata[i].plaques[p].box.nodes());
            for (int k = 0; k < s.strata[i].plaques[p].box.nodes(); ++k)
                R.cloud[i][p].push_back(R.field.point(s, i, static_cast<int>(p), k));
        }
    }
    std::vector<int> computed;
    for (int i = 0; i < n; ++i)
        if (!F.plan[i].halo) computed.push_back(i);
    detail::parallel_for(static_cast<int>(computed.size()), [&](int j) {
        const auto& id = F.nodes[computed[j]];
        R.pullback[id.stratum][id.plaque][id.node] = extract_pullback(ctx, R.field, id);
    });
    for (int i : computed) {
        const auto& id = F.nodes[i];
        const Plaque& pl = s.strata[id.stratum].plaques[id.plaque];
        if (!pl.on_stratum[id.node]) continue;
        const auto& e = R.pullback[id.stratum][id.plaque][id.node];
        R.residual_max = std::max(R.residual_max, e.residual);
        R.leaf_distance_max = std::max(R.leaf_distance_max, e.leaf_distance);
        const Vec& d = R.field.disp[id.stratum][id.plaque][id.node];
        R.displacement_sup = std::max(R.displacement_sup, d.norm());
        const Mat T = s.tangent(F.plan[i].fiber);
        R.fiber_defect = std::max(R.fiber_defect, T.cols() ? (T.transpose() * d).norm() : 0.0);
    }
    return R;
}

// (fa, fb) acting on the product of the two ambient spaces.
inline EndomorphismSpec product_map(const EndomorphismSpec& fa, const EndomorphismSpec& fb) {
    if (fa.kind != MapKind::PolyProduct || fb.kind != MapKind::PolyProduct)
        throw std::invalid_argument("product_map needs coordinate-wise polynomial factors");
    std::vector<Axis> axes = fa.ambient.axes;
    axes.insert(axes.end(), fb.ambient.axes.begin(), fb.ambient.axes.end());
    auto coeffs = fa.poly;
    coeffs.insert(coeffs.end(), fb.poly.begin(), fb.poly.end());
    EndomorphismSpec g = poly_product(fa.name + "x" + fb.name, AmbientSpace(axes), coeffs);
    const int na = fa.dim(), nb = fb.dim();
    auto pad = [&](const PerturbationSpec& p, int off, int own) {
        PerturbationSpec q = p;
        q.center = Vec::Zero(na + nb);
        q.radius = Vec::Zero(na + nb);
        q.direction = Vec::Zero(na + nb);
        q.center.segment(off, own) = p.center;
        q.radius.segment(off, own) = p.radius;
        q.direction.segment(off, own) = p.direction;
        q.mod_axis = p.mod_axis + off;
        return q;
    };
    for (const auto& p : fa.perturbations) g.perturbations.push_back(pad(p, 0, na));
    for (const auto& p : fb.perturbations) g.perturbations.push_back(pad(p, na, nb));
    return g;
}

struct CrosscheckResult {
    double discrepancy = 0.0;
    int compared = 0;
    PersistenceResult product, a, b;
};

// Persistence of the product against the product of the factor
// persistences, compared on the home-normal components of every sample.
// Leaf components are a reparametrisation and are not compared.
inline CrosscheckResult product_crosscheck(const SampledStratification& sa, const EndomorphismSpec& fa,
                                           const EndomorphismSpec& fa_p, const SampledStratification& sb,
                                           const EndomorphismSpec& fb, const EndomorphismSpec& fb_p,
                                           double eta_prime, double tol = 1e-12,
                                           const SampledStratification* prebuilt = nullptr) {
    CrosscheckResult out;
    SampledStratification own;
    if (!prebuilt) {
        own = build_product_stratification(sa, sb);
        const auto g = product_map(fa, fb);
        assign_images(own, [&](const Vec& x) { return eval_map(g, x); });
        prebuilt = &own;
    }
    const SampledStratification& sp = *prebuilt;
    const auto g = product_map(fa, fb);
    const auto gp = product_map(fa_p, fb_p);
    out.a = persist_stratification(sa, fa, fa_p, eta_prime, tol);
    out.b = persist_stratification(sb, fb, fb_p, eta_prime, tol);
    out.product = persist_stratification(sp, g, gp, eta_prime, tol);
    const int na = sa.ambient.dim();
    for (int k = 0; k < sp.size(); ++k) {
        const auto [i, j] = sp.factors[k];
        const Stratum& A = sa.strata[i];
        const Stratum& B = sb.strata[j];
        const int nqb = static_cast<int>(B.plaques.size());
        for (int P = 0; P < static_cast<int>(sp.strata[k].plaques.size()); ++P) {
            const int p = P / nqb, q = P % nqb;
            const int mp = A.plaques[p].box.nodes();
            const Plaque& pl = sp.strata[k].plaques[P];
            for (int node = 0; node < pl.box.nodes(); ++node) {
                if (!pl.on_stratum[node]) continue;
                const int u = node % mp, v = node / mp;
                const Vec& dp = out.product.field.disp[k][P][node];
                const Vec& da = out.a.field.disp[i][p][u];
                const Vec& db = out.b.field.disp[j][q][v];
                for (int ax : A.normal_axes)
                    out.discrepancy = std::max(out.discrepancy, std::abs(dp[ax] - da[ax]));
                for (int ax : B.normal_axes)
                    out.discrepancy = std::max(out.discrepancy, std::abs(dp[na + ax] - db[ax]));
                ++out.compared;
            }
        }
    }
    return out;
}

// one row per sample: stratum, plaque, node coordinates, displacement, residual
inline void write_embedding_csv(std::ostream& os, const SampledStratification& s, const PersistenceResult& r,
                                int stratum) {
    const int n = s.ambient.dim();
    os << "plaque_code";
    for (int i = 0; i < n; ++i) os << ",x_" << i;
    for (int i = 0; i < n; ++i) os << ",d_" << i;
    os << ",residual\n";
    const Stratum& st = s.strata[stratum];
    auto clean = [](double v) { return v == 0.0 ? 0.0 : v; };
    for (int p = 0; p < static_cast<int>(st.plaques.size()); ++p) {
        const Plaque& pl = st.plaques[p];
        for (int k = 0; k < pl.box.nodes(); ++k) {
            if (!pl.on_stratum[k]) continue;
            const Vec x = s.node_point(stratum, p, k);
            const Vec& d = r.field.disp[stratum][p][k];
            os << pl.code;
            for (int i = 0; i < n; ++i) os << ',' << fmt17(clean(x[i]));
            for (int i = 0; i < n; ++i) os << ',' << fmt17(clean(d[i]));
            os << ',' << fmt17(clean(r.pullback[stratum][p][k].residual)) << "\n";
        }
    }
}

inline nlohmann::json to_json(const PersistenceResult& r, double eta_prime, double t) {
    nlohmann::json j;
    j["iterations"] = r.iterations;
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& tr : r.traces) {
        nlohmann::json s;
        s["step"] = tr.stratum;
        s["active"] = tr.active;
        s["sweeps"] = tr.iterations();
        s["ratios"] = tr.ratio;
        s["lambda_bound"] = tr.lambda_bound;
        steps.push_back(s);
    }
    j["ratios"] = steps;
    j["contraction_ratio"] = r.contraction_ratio;
    j["residual_max"] = r.residual_max;
    j["displacement_sup"] = r.displacement_sup;
    j["leaf_distance_max"] = r.leaf_distance_max;
    j["eta_prime"] = eta_prime;
    j["t"] = t;
    j["filtration"] = {{"M", r.filtration.M},
                       {"ring_count", r.filtration.ring_count},
                       {"margin", std::isfinite(r.filtration.margin) ? r.filtration.margin : -1.0},
                       {"outside_tube", r.filtration.outside_tube},
                       {"transversality",
                        std::isfinite(r.filtration.transversality) ? r.filtration.transversality : -1.0}};
    return j;
}

}  // namespace lamina
