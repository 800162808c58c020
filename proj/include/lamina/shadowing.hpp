#pragma once

#include "dynamics.hpp"
#include "strata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <vector>

namespace lamina {

struct PseudoOrbitCheck {
    bool valid = true;
    int first_violation = -1;  // step n where f(x_n) and x_(n+1) fail to share a plaque
    double worst_leaf_gap = 0.0;
};

namespace detail {

inline double leaf_gap(const AmbientSpace& amb, const Stratum& X, const Vec& a, const Vec& b, double& normal_gap) {
    const Vec d = amb.diff(a, b);
    normal_gap = 0.0;
    for (int ax : X.normal_axes) normal_gap = std::max(normal_gap, std::abs(d[ax]));
    double l = 0.0;
    for (int ax : X.leaf_axes) l += d[ax] * d[ax];
    return std::sqrt(l);
}

}  // namespace detail

// f(x_n) and x_(n+1) must lie on one leaf of X (equal normal coordinates)
// at leaf distance below eps.
inline PseudoOrbitCheck is_pseudo_orbit(const std::vector<Vec>& seq, const EndomorphismSpec& f,
                                        const SampledStratification& s, int stratum, double eps) {
    PseudoOrbitCheck out;
    const Stratum& X = s.strata[stratum];
    for (std::size_t n = 0; n + 1 < seq.size(); ++n) {
        double ng = 0.0;
        const double lg = detail::leaf_gap(s.ambient, X, eval_map(f, seq[n]), seq[n + 1], ng);
        out.worst_leaf_gap = std::max(out.worst_leaf_gap, lg);
        if (ng > 1e-12 || !(lg < eps)) {
            out.valid = false;
            if (out.first_violation < 0) out.first_violation = static_cast<int>(n);
        }
    }
    return out;
}

struct ConfinementParams {
    double eta = 0.001;  // leaf fattening of each step
    int horizon = 64;
    double grid = 1.0 / 256;  // quantisation of starts and states
    double tube = 0.05;       // radius of V_X
    double on_tol = 1e-9;     // distance below which a point counts as on X
};

struct ConfinementVerdict {
    bool confined = true;
    int starts = 0;
    int longest = 0;           // deepest level reached by any search
    std::optional<Vec> witness;  // a start whose search survived the horizon
};

namespace detail {

struct CellKey {
    std::vector<long> k;
    bool operator<(const CellKey& o) const { return k < o.k; }
};

inline CellKey cell_of(const Vec& z, double h) {
    CellKey c;
    c.k.resize(z.size());
    for (int i = 0; i < z.size(); ++i) c.k[i] = static_cast<long>(std::floor(z[i] / h + 0.5));
    return c;
}

// start points: samples of X moved along normal grid offsets inside the tube
inline std::vector<Vec> tube_starts(const SampledStratification& s, int stratum, const ConfinementParams& p) {
    const Stratum& X = s.strata[stratum];
    const int c = X.codim();
    const int m = static_cast<int>(std::floor(p.tube / p.grid));
    std::vector<Vec> out;
    std::set<CellKey> seen;
    for (const auto& ref : s.samples(stratum)) {
        const Vec x = s.point(ref);
        std::vector<int> off(c, -m);
        while (true) {
            Vec z = x;
            for (int j = 0; j < c; ++j) z[X.normal_axes[j]] += off[j] * p.grid;
            z = s.ambient.wrap(z);
            const double d = X.distance(z);
            if (d > p.on_tol && d < p.tube && seen.insert(cell_of(z, p.grid * 1e-3)).second) out.push_back(z);
            int j = 0;
            while (j < c && ++off[j] > m) {
                off[j] = -m;
                ++j;
            }
            if (j == c || c == 0) break;
        }
    }
    return out;
}

// Breadth-first search of eta-pseudo-chains from z inside the punctured tube.
// Returns the first depth with no surviving state, or -1 if the horizon is reached.
inline int chain_depth(const SampledStratification& s, int stratum, const EndomorphismSpec& f, const Vec& z,
                       const ConfinementParams& p) {
    const Stratum& X = s.strata[stratum];
    auto inside = [&](const Vec& y) {
        const double d = X.distance(y);
        return d < p.tube;
    };
    if (!inside(z)) return 0;
    if (X.distance(z) <= p.on_tol) return -1;
    std::vector<Vec> frontier{z};
    std::vector<double> shifts{-p.eta, -0.5 * p.eta, 0.0, 0.5 * p.eta, p.eta};
    const int d = X.dim;
    for (int depth = 1; depth <= p.horizon; ++depth) {
        std::map<CellKey, Vec> next;
        for (const auto& y : frontier) {
            const Vec fy = eval_map(f, y);
            std::vector<int> idx(d, 0);
            while (true) {
                Vec w = fy;
                for (int a = 0; a < d; ++a) w[X.leaf_axes[a]] += shifts[idx[a]];
                w = s.ambient.wrap(w);
                bool finite = true;
                for (int i = 0; i < w.size(); ++i) finite = finite && std::isfinite(w[i]);
                if (finite && inside(w)) next.emplace(cell_of(w, p.grid), w);
                int a = 0;
                while (a < d && ++idx[a] >= static_cast<int>(shifts.size())) {
                    idx[a] = 0;
                    ++a;
                }
                if (a == d) break;
            }
        }
        if (next.empty()) return depth;
        frontier.clear();
        for (auto& kv : next) frontier.push_back(kv.second);
    }
    return -1;
}

}  // namespace detail

// Plaque expansiveness at grid scale: no eta-pseudo-chain respecting the leaves
// of X starts off X and stays in the tube for the whole horizon.
inline ConfinementVerdict confinement_check(const SampledStratification& s, int stratum, const EndomorphismSpec& f,
                                            const ConfinementParams& p) {
    ConfinementVerdict v;
    const auto starts = detail::tube_starts(s, stratum, p);
    v.starts = static_cast<int>(starts.size());
    for (const auto& z : starts) {
        const int depth = detail::chain_depth(s, stratum, f, z, p);
        if (depth < 0) {
            v.confined = false;
            v.longest = p.horizon;
            if (!v.witness) v.witness = z;
            break;
        }
        v.longest = std::max(v.longest, depth);
    }
    return v;
}

struct ExitTimeRow {
    Vec x;
    int exit_time = -1;  // -1 for points that never leave (on X, or beyond the horizon)
};

struct ExitTimeTable {
    std::vector<ExitTimeRow> rows;
};

inline ExitTimeTable exit_time_table(const SampledStratification& s, int stratum, const EndomorphismSpec& f,
                                     const std::vector<Vec>& points, const ConfinementParams& p) {
    ExitTimeTable t;
    for (const auto& z : points) t.rows.push_back({z, detail::chain_depth(s, stratum, f, z, p)});
    return t;
}

inline ExitTimeTable exit_time_table(const SampledStratification& s, int stratum, const EndomorphismSpec& f,
                                     const ConfinementParams& p) {
    return exit_time_table(s, stratum, f, detail::tube_starts(s, stratum, p), p);
}

inline void write_exit_time_csv(std::ostream& os, const ExitTimeTable& t) {
    const int n = t.rows.empty() ? 0 : static_cast<int>(t.rows[0].x.size());
    for (int i = 0; i < n; ++i) os << "x_" << i << ',';
    os << "exit_time\n";
    for (const auto& r : t.rows) {
        for (int i = 0; i < n; ++i) os << fmt17(r.x[i] == 0.0 ? 0.0 : r.x[i]) << ',';
        if (r.exit_time < 0) os << "inf\n";
        else os << r.exit_time << "\n";
    }
}

struct ExpansivenessResult {
    bool found = false;
    SampleRef a, b;  // lexicographically least pair (flat sample order)
    int pairs_checked = 0;
};

// Pairs of samples of X closer than eps and not in one small plaque whose
// pseudo-orbits stay eps-close for the horizon.  The second orbit may slide
// along its leaf by up to eps per step towards the first.
inline ExpansivenessResult expansiveness_search(const SampledStratification& s, int stratum, const EndomorphismSpec& f,
                                                double eps, int horizon) {
    ExpansivenessResult out;
    const Stratum& X = s.strata[stratum];
    const auto refs = s.samples(stratum);
    std::vector<Vec> pts;
    for (const auto& r : refs) pts.push_back(s.point(r));
    // neighbours through a bucket grid of cell eps
    std::map<detail::CellKey, std::vector<int>> buckets;
    for (int i = 0; i < static_cast<int>(pts.size()); ++i) buckets[detail::cell_of(pts[i], eps)].push_back(i);
    const int n = s.ambient.dim();
    auto neighbours = [&](int i) {
        std::vector<int> out_idx;
        const auto c0 = detail::cell_of(pts[i], eps);
        std::vector<long> off(n, -1);
        while (true) {
            detail::CellKey c = c0;
            for (int a = 0; a < n; ++a) c.k[a] += off[a];
            auto it = buckets.find(c);
            if (it != buckets.end())
                for (int j : it->second)
                    if (j > i) out_idx.push_back(j);
            int a = 0;
            while (a < n && ++off[a] > 1) {
                off[a] = -1;
                ++a;
            }
            if (a == n) break;
        }
        // periodic axes: also scan the wrapped neighbour cells by brute force near the seam
        for (int a = 0; a < n; ++a)
            if (s.ambient.is_circle(a)) {
                const double per = s.ambient.axes[a].period;
                if (pts[i][a] < eps || pts[i][a] > per - eps)
                    for (int j = i + 1; j < static_cast<int>(pts.size()); ++j)
                        if (s.ambient.dist(pts[i], pts[j]) < eps) out_idx.push_back(j);
            }
        std::sort(out_idx.begin(), out_idx.end());
        out_idx.erase(std::unique(out_idx.begin(), out_idx.end()), out_idx.end());
        return out_idx;
    };
    for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
        for (int j : neighbours(i)) {
            if (!(s.ambient.dist(pts[i], pts[j]) < eps)) continue;
            double ng = 0.0;
            const double lg = detail::leaf_gap(s.ambient, X, pts[i], pts[j], ng);
            if (refs[i].plaque == refs[j].plaque && ng <= 1e-12 && lg < eps) continue;
            ++out.pairs_checked;
            Vec x = pts[i], y = pts[j];
            bool close = true;
            for (int k = 0; k < horizon && close; ++k) {
                x = eval_map(f, x);
                y = eval_map(f, y);
                const Vec d = s.ambient.diff(x, y);
                for (int ax : X.leaf_axes) {
                    const double shift = std::clamp(d[ax], -eps, eps);
                    y[ax] += shift;
                }
                y = s.ambient.wrap(y);
                close = s.ambient.dist(x, y) < eps;
            }
            if (close) {
                out.found = true;
                out.a = refs[i];
                out.b = refs[j];
                return out;
            }
        }
    }
    return out;
}

}  // namespace lamina
