#pragma once

#include "cantor.hpp"
#include "core.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lamina {

// Uniform tensor grid on a leaf box; axis 0 varies fastest.
struct LeafBox {
    std::vector<double> lo, hi;
    std::vector<int> count;
    std::vector<bool> periodic;

    int dim() const { return static_cast<int>(lo.size()); }
    int nodes() const {
        int m = 1;
        for (int c : count) m *= c;
        return m;
    }
    double spacing(int a) const {
        if (periodic[a]) return (hi[a] - lo[a]) / count[a];
        return count[a] > 1 ? (hi[a] - lo[a]) / (count[a] - 1) : 0.0;
    }
    double coord(int a, int k) const { return lo[a] + k * spacing(a); }
    std::vector<int> unflatten(int idx) const {
        std::vector<int> m(dim());
        for (int a = 0; a < dim(); ++a) {
            m[a] = idx % count[a];
            idx /= count[a];
        }
        return m;
    }
    int flatten(const std::vector<int>& m) const {
        int idx = 0;
        for (int a = dim() - 1; a >= 0; --a) idx = idx * count[a] + m[a];
        return idx;
    }
    double max_spacing() const {
        double h = 0.0;
        for (int a = 0; a < dim(); ++a) h = std::max(h, spacing(a));
        return h;
    }
};

// One leaf box at one transversal code.  Nodes flagged on_stratum are the
// samples of the stratum; closure nodes lie on the frontier (lower strata);
// the rest are halo nodes that only support interpolation.
struct Plaque {
    std::string code;
    Vec base;
    LeafBox box;
    std::vector<unsigned char> on_stratum;
    std::vector<unsigned char> in_closure;
    int image = -1;
};

struct Chart {
    std::string name;
    std::vector<int> plaques;
};

struct SpatialIndex;

struct Stratum {
    std::string name;
    int dim = 0;
    std::vector<int> leaf_axes, normal_axes;
    std::vector<Plaque> plaques;
    std::vector<Chart> charts;
    double tube_width = 0.1;
    // distance from a point to the closure of the stratum
    std::function<double(const Vec&)> distance;
    std::shared_ptr<const SpatialIndex> index;

    int codim() const { return static_cast<int>(normal_axes.size()); }
};

struct SampleRef {
    int stratum = 0, plaque = 0, node = 0;
};

struct SampledStratification {
    AmbientSpace ambient;
    std::vector<Stratum> strata;
    // incidence[i][j] == true iff X_i <= X_j (X_i lies in the closure of X_j)
    std::vector<std::vector<bool>> incidence;
    // scale below which K is not resolved; containment checks use it
    double resolution = 0.0;
    // for products: the factor strata (i, j) of every stratum
    std::vector<std::pair<int, int>> factors;

    int size() const { return static_cast<int>(strata.size()); }

    Vec node_point(int s, int p, int node) const {
        const Stratum& st = strata[s];
        const Plaque& pl = st.plaques[p];
        Vec x = pl.base;
        const auto m = pl.box.unflatten(node);
        for (int a = 0; a < st.dim; ++a) x[st.leaf_axes[a]] = pl.box.coord(a, m[a]);
        return ambient.wrap(x);
    }
    Vec point(const SampleRef& r) const { return node_point(r.stratum, r.plaque, r.node); }

    Mat tangent(int s) const {
        const Stratum& st = strata[s];
        Mat t = Mat::Zero(ambient.dim(), st.dim);
        for (int a = 0; a < st.dim; ++a) t(st.leaf_axes[a], a) = 1.0;
        return t;
    }
    Mat normal(int s) const {
        const Stratum& st = strata[s];
        Mat nm = Mat::Zero(ambient.dim(), st.codim());
        for (int a = 0; a < st.codim(); ++a) nm(st.normal_axes[a], a) = 1.0;
        return nm;
    }

    std::vector<SampleRef> samples(int s) const {
        std::vector<SampleRef> out;
        const Stratum& st = strata[s];
        for (int p = 0; p < static_cast<int>(st.plaques.size()); ++p)
            for (int k = 0; k < st.plaques[p].box.nodes(); ++k)
                if (st.plaques[p].on_stratum[k]) out.push_back({s, p, k});
        return out;
    }
    std::vector<SampleRef> samples() const {
        std::vector<SampleRef> out;
        for (int s = 0; s < size(); ++s) {
            auto v = samples(s);
            out.insert(out.end(), v.begin(), v.end());
        }
        return out;
    }

    double leaf_spacing() const {
        double h = 0.0;
        for (const auto& st : strata)
            for (const auto& p : st.plaques) h = std::max(h, p.box.max_spacing());
        return h;
    }

    // plaque of stratum s containing z, or -1
    int locate(int s, const Vec& z, double tol = 1e-9) const;
};

// Bucket grid over plaque bounding boxes, used for plaque lookup and
// distance queries near a stratum.
struct SpatialIndex {
    double cell = 1.0;
    std::vector<double> period;  // 0 on line axes
    std::unordered_map<std::string, std::vector<int>> buckets;

    std::vector<long> key_of(const Vec& z) const {
        std::vector<long> k(z.size());
        for (int i = 0; i < z.size(); ++i) k[i] = static_cast<long>(std::floor(z[i] / cell));
        return k;
    }
    long ncell(int axis) const { return static_cast<long>(std::ceil(period[axis] / cell)); }
    std::string encode(std::vector<long> k) const {
        std::string s;
        for (std::size_t i = 0; i < k.size(); ++i) {
            if (period[i] > 0.0) {
                const long n = ncell(static_cast<int>(i));
                k[i] = ((k[i] % n) + n) % n;
            }
            s += std::to_string(k[i]);
            s += ',';
        }
        return s;
    }

    void insert_box(const std::vector<double>& lo, const std::vector<double>& hi, int id) {
        const int n = static_cast<int>(lo.size());
        std::vector<long> a(n), b(n), cur(n);
        for (int i = 0; i < n; ++i) {
            a[i] = static_cast<long>(std::floor(lo[i] / cell));
            b[i] = static_cast<long>(std::floor(hi[i] / cell));
            if (period[i] > 0.0 && b[i] - a[i] + 1 > ncell(i)) b[i] = a[i] + ncell(i) - 1;
            cur[i] = a[i];
        }
        while (true) {
            buckets[encode(cur)].push_back(id);
            int i = 0;
            while (i < n && ++cur[i] > b[i]) {
                cur[i] = a[i];
                ++i;
            }
            if (i == n) break;
        }
    }

    // ids registered within one cell of z, sorted and unique
    std::vector<int> near(const Vec& z) const {
        const int n = static_cast<int>(z.size());
        for (int i = 0; i < n; ++i)
            if (!(std::abs(z[i]) < 1e12)) return {};
        const auto k0 = key_of(z);
        std::vector<int> out;
        std::vector<long> off(n, -1);
        while (true) {
            std::vector<long> k(n);
            for (int i = 0; i < n; ++i) k[i] = k0[i] + off[i];
            auto it = buckets.find(encode(k));
            if (it != buckets.end()) out.insert(out.end(), it->second.begin(), it->second.end());
            int i = 0;
            while (i < n && ++off[i] > 1) {
                off[i] = -1;
                ++i;
            }
            if (i == n) break;
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

namespace detail {

inline void plaque_bounds(const AmbientSpace& amb, const Stratum& st, const Plaque& p,
                          std::vector<double>& lo, std::vector<double>& hi) {
    const int n = amb.dim();
    lo.assign(n, 0.0);
    hi.assign(n, 0.0);
    for (int i = 0; i < n; ++i) lo[i] = hi[i] = p.base[i];
    for (int a = 0; a < st.dim; ++a) {
        lo[st.leaf_axes[a]] = p.box.lo[a];
        hi[st.leaf_axes[a]] = p.box.hi[a];
    }
}

// distance from z to the closed plaque box (leaf box x fixed normal coordinates)
inline double plaque_distance(const AmbientSpace& amb, const Stratum& st, const Plaque& p,
                              const Vec& z) {
    Vec d = amb.diff(z, p.base);
    double s = 0.0;
    for (int i : st.normal_axes) s += d[i] * d[i];
    for (int a = 0; a < st.dim; ++a) {
        const int ax = st.leaf_axes[a];
        if (p.box.periodic[a]) continue;
        const double x = z[ax];
        double e = 0.0;
        if (x < p.box.lo[a]) e = p.box.lo[a] - x;
        else if (x > p.box.hi[a]) e = x - p.box.hi[a];
        s += e * e;
    }
    return std::sqrt(s);
}

}  // namespace detail

// Builds the lookup index of every stratum and installs the default
// box-distance function where none was supplied.
inline void finalize(SampledStratification& s) {
    double w = 0.0;
    for (const auto& st : s.strata) w = std::max(w, st.tube_width);
    const double cell = std::max(2.0 * w, 1e-3);
    std::vector<double> period(s.ambient.dim(), 0.0);
    for (int i = 0; i < s.ambient.dim(); ++i)
        if (s.ambient.is_circle(i)) period[i] = s.ambient.axes[i].period;
    for (auto& st : s.strata) {
        auto idx = std::make_shared<SpatialIndex>();
        idx->cell = cell;
        idx->period = period;
        std::vector<double> lo, hi;
        for (int p = 0; p < static_cast<int>(st.plaques.size()); ++p) {
            detail::plaque_bounds(s.ambient, st, st.plaques[p], lo, hi);
            idx->insert_box(lo, hi, p);
        }
        st.index = idx;
        if (!st.distance) {
            const AmbientSpace amb = s.ambient;
            // copy what the closure needs so the stratification can be moved
            auto plaques = std::make_shared<std::vector<Plaque>>(st.plaques);
            auto meta = std::make_shared<Stratum>();
            meta->dim = st.dim;
            meta->leaf_axes = st.leaf_axes;
            meta->normal_axes = st.normal_axes;
            st.distance = [amb, plaques, meta, idx, cell](const Vec& z) {
                double best = cell;
                for (int p : idx->near(z))
                    best = std::min(best, detail::plaque_distance(amb, *meta, (*plaques)[p], z));
                return best;
            };
        }
    }
}

inline int SampledStratification::locate(int s, const Vec& z, double tol) const {
    const Stratum& st = strata[s];
    if (!st.index) throw std::logic_error("stratification not finalized");
    int best = -1;
    double bd = tol;
    for (int p : st.index->near(z)) {
        const double d = detail::plaque_distance(ambient, st, st.plaques[p], z);
        if (d <= bd) {
            bd = d;
            best = p;
            if (d == 0.0) break;
        }
    }
    return best;
}

// Fills Plaque::image (the code map f*) by locating the image of one
// representative node of every plaque.  Throws OrbitLeavesSamples when an
// image plaque is not sampled.
template <class Map>
void assign_images(SampledStratification& s, const Map& f, double tol = 1e-9) {
    for (int si = 0; si < s.size(); ++si) {
        auto& st = s.strata[si];
        for (int p = 0; p < static_cast<int>(st.plaques.size()); ++p) {
            auto& pl = st.plaques[p];
            int node = -1;
            const int total = pl.box.nodes();
            // prefer a sample near the middle of the box
            for (int k = total / 2; k < total && node < 0; ++k)
                if (pl.on_stratum[k]) node = k;
            for (int k = 0; k < total && node < 0; ++k)
                if (pl.on_stratum[k]) node = k;
            if (node < 0) continue;
            const Vec y = f(s.node_point(si, p, node));
            pl.image = s.locate(si, y, tol);
            if (pl.image < 0)
                throw OrbitLeavesSamples("image of plaque " + pl.code + " of stratum " + st.name +
                                         " is not sampled");
        }
    }
}

inline LeafBox line_box(double lo, double hi, int count) {
    LeafBox b;
    b.lo = {lo};
    b.hi = {hi};
    b.count = {std::max(count, 2)};
    b.periodic = {false};
    return b;
}

inline LeafBox point_box() { return LeafBox{}; }

inline int nodes_for(double length, double density, int min_nodes = 5) {
    return std::max(min_nodes, static_cast<int>(std::ceil(length * density)) + 1);
}

// Plaque on a closed interval leaf whose two end nodes belong to the frontier.
inline Plaque interval_plaque(std::string code, Vec base, double lo, double hi, int count) {
    Plaque p;
    p.code = std::move(code);
    p.base = std::move(base);
    p.box = line_box(lo, hi, count);
    const int m = p.box.nodes();
    p.on_stratum.assign(m, 1);
    p.in_closure.assign(m, 1);
    p.on_stratum[0] = p.on_stratum[m - 1] = 0;
    return p;
}

inline Plaque point_plaque(std::string code, Vec base) {
    Plaque p;
    p.code = std::move(code);
    p.base = std::move(base);
    p.on_stratum = {1};
    p.in_closure = {1};
    return p;
}

// The stratification (K, X) of [-beta, beta] for x -> x^2 + c: the 0-dim
// stratum of sampled points of K and the 1-dim stratum of its gaps.
inline SampledStratification cantor_stratification(const CantorSet& k, int levels, double density,
                                                   double tube_width) {
    SampledStratification s;
    s.ambient = AmbientSpace::euclidean(1);
    Stratum k0;
    k0.name = "K";
    k0.dim = 0;
    k0.normal_axes = {0};
    k0.tube_width = tube_width;
    const auto pts = cantor_points(k, levels);
    Chart c0{"K", {}};
    for (double x : pts) {
        c0.plaques.push_back(static_cast<int>(k0.plaques.size()));
        k0.plaques.push_back(point_plaque(itinerary(k, x, k.depth + 4), Vec::Constant(1, x)));
    }
    k0.charts.push_back(c0);
    Stratum x1;
    x1.name = "X";
    x1.dim = 1;
    x1.leaf_axes = {0};
    x1.tube_width = tube_width;
    Chart c1{"gaps", {}};
    for (const auto& g : cantor_gaps(k, levels)) {
        c1.plaques.push_back(static_cast<int>(x1.plaques.size()));
        x1.plaques.push_back(interval_plaque(itinerary(k, 0.5 * (g.lo + g.hi), k.depth + 4),
                                             Vec::Zero(1), g.lo, g.hi,
                                             nodes_for(g.width(), density)));
    }
    x1.charts.push_back(c1);
    s.strata = {k0, x1};
    s.incidence = {{true, true}, {false, true}};
    s.resolution = unresolved_width(k, levels);
    finalize(s);
    assign_images(s, [&](const Vec& x) { return Vec::Constant(1, k.map(x[0])); });
    return s;
}

// Single-point stratification of R^0 used as the unit of the product.
inline SampledStratification point_stratification() {
    SampledStratification s;
    s.ambient.axes = {};
    Stratum p;
    p.name = "pt";
    p.plaques.push_back(point_plaque("o", Vec::Zero(0)));
    p.plaques[0].image = 0;
    p.charts.push_back({"pt", {0}});
    s.strata = {p};
    s.incidence = {{true}};
    return s;
}

// Strata Y = X_a x X_b with the product order.  Plaques are products of
// plaques and their grids are tensor products of the factor grids.
inline SampledStratification build_product_stratification(const SampledStratification& a,
                                                          const SampledStratification& b) {
    SampledStratification s;
    std::vector<Axis> axes = a.ambient.axes;
    axes.insert(axes.end(), b.ambient.axes.begin(), b.ambient.axes.end());
    s.ambient.axes = axes;
    const int na = a.ambient.dim(), nb = b.ambient.dim();
    struct Pair {
        int i, j, dim;
    };
    std::vector<Pair> pairs;
    for (int i = 0; i < a.size(); ++i)
        for (int j = 0; j < b.size(); ++j) pairs.push_back({i, j, a.strata[i].dim + b.strata[j].dim});
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return x.dim < y.dim; });

    for (const auto& pr : pairs) {
        const Stratum& A = a.strata[pr.i];
        const Stratum& B = b.strata[pr.j];
        Stratum st;
        st.name = b.size() == 1 && b.strata[0].name == "pt" ? A.name
                : a.size() == 1 && a.strata[0].name == "pt" ? B.name
                : A.name + "x" + B.name;
        st.dim = pr.dim;
        st.leaf_axes = A.leaf_axes;
        for (int x : B.leaf_axes) st.leaf_axes.push_back(x + na);
        st.normal_axes = A.normal_axes;
        for (int x : B.normal_axes) st.normal_axes.push_back(x + na);
        st.tube_width = std::min(A.tube_width, B.tube_width);
        const int nqb = static_cast<int>(B.plaques.size());
        for (int p = 0; p < static_cast<int>(A.plaques.size()); ++p)
            for (int q = 0; q < nqb; ++q) {
                const Plaque& P = A.plaques[p];
                const Plaque& Q = B.plaques[q];
                Plaque pl;
                pl.code = P.code + "|" + Q.code;
                pl.base = Vec(na + nb);
                pl.base << P.base, Q.base;
                pl.box = P.box;
                pl.box.lo.insert(pl.box.lo.end(), Q.box.lo.begin(), Q.box.lo.end());
                pl.box.hi.insert(pl.box.hi.end(), Q.box.hi.begin(), Q.box.hi.end());
                pl.box.count.insert(pl.box.count.end(), Q.box.count.begin(), Q.box.count.end());
                pl.box.periodic.insert(pl.box.periodic.end(), Q.box.periodic.begin(), Q.box.periodic.end());
                const int mp = P.box.nodes(), mq = Q.box.nodes();
                pl.on_stratum.resize(mp * mq);
                pl.in_closure.resize(mp * mq);
                for (int v = 0; v < mq; ++v)
                    for (int u = 0; u < mp; ++u) {
                        pl.on_stratum[u + mp * v] = P.on_stratum[u] && Q.on_stratum[v];
                        pl.in_closure[u + mp * v] = P.in_closure[u] && Q.in_closure[v];
                    }
                pl.image = (P.image < 0 || Q.image < 0) ? -1 : P.image * nqb + Q.image;
                st.plaques.push_back(std::move(pl));
            }
        for (const auto& ca : A.charts)
            for (const auto& cb : B.charts) {
                Chart c{ca.name + "x" + cb.name, {}};
                for (int p : ca.plaques)
                    for (int q : cb.plaques) c.plaques.push_back(p * nqb + q);
                st.charts.push_back(std::move(c));
            }
        if (A.distance && B.distance && na > 0 && nb > 0) {
            auto da = A.distance, db = B.distance;
            st.distance = [da, db, na, nb](const Vec& z) {
                const double x = da(z.head(na)), y = db(z.tail(nb));
                return std::sqrt(x * x + y * y);
            };
        } else if (A.distance && nb == 0) {
            st.distance = A.distance;
        } else if (B.distance && na == 0) {
            st.distance = B.distance;
        }
        s.strata.push_back(std::move(st));
    }
    const int m = s.size();
    s.incidence.assign(m, std::vector<bool>(m, false));
    for (int x = 0; x < m; ++x)
        for (int y = 0; y < m; ++y)
            s.incidence[x][y] = a.incidence[pairs[x].i][pairs[y].i] && b.incidence[pairs[x].j][pairs[y].j];
    s.resolution = std::max(a.resolution, b.resolution);
    for (const auto& pr : pairs) s.factors.emplace_back(pr.i, pr.j);
    finalize(s);
    return s;
}

struct LeafRestriction {
    int stratum = 0, plaque = 0;
    Vec center;
    std::vector<double> lo, hi;
    bool saturated = false;
};

// The part of the plaque through sample x within leaf radius eps.
inline LeafRestriction plaque_neighborhood(const SampledStratification& s, const SampleRef& x, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("plaque_neighborhood needs eps > 0");
    const Stratum& st = s.strata[x.stratum];
    const Plaque& pl = st.plaques[x.plaque];
    LeafRestriction r;
    r.stratum = x.stratum;
    r.plaque = x.plaque;
    r.center = s.point(x);
    if (st.dim == 0) {
        r.saturated = true;
        return r;
    }
    r.saturated = true;
    for (int a = 0; a < st.dim; ++a) {
        const double c = r.center[st.leaf_axes[a]];
        const double full = pl.box.hi[a] - pl.box.lo[a];
        if (pl.box.periodic[a]) {
            if (2.0 * eps < full) {
                r.lo.push_back(c - eps);
                r.hi.push_back(c + eps);
                r.saturated = false;
            } else {
                r.lo.push_back(pl.box.lo[a]);
                r.hi.push_back(pl.box.hi[a]);
            }
            continue;
        }
        const double lo = std::max(pl.box.lo[a], c - eps), hi = std::min(pl.box.hi[a], c + eps);
        if (lo > pl.box.lo[a] || hi < pl.box.hi[a]) r.saturated = false;
        r.lo.push_back(lo);
        r.hi.push_back(hi);
    }
    return r;
}

struct NormalFrameField {
    // one orthonormal basis per stratum (frames are constant along coordinate-aligned strata)
    std::vector<Mat> frames;
    bool monotone = true;
    double worst_monotonicity = 0.0;
};

inline Mat orthonormal_complement(const Mat& tangent, double tol = 1e-10) {
    const int n = static_cast<int>(tangent.rows());
    const int d = static_cast<int>(tangent.cols());
    std::vector<Vec> basis;
    for (int j = 0; j < d; ++j) {
        Vec v = tangent.col(j);
        for (const auto& b : basis) v -= b.dot(v) * b;
        const double nv = v.norm();
        if (nv < tol) throw FrameDegeneracy("leaf tangent frame is rank deficient");
        basis.push_back(v / nv);
    }
    Mat out(n, n - d);
    int k = 0;
    for (int i = 0; i < n && k < n - d; ++i) {
        Vec v = unit(n, i);
        for (const auto& b : basis) v -= b.dot(v) * b;
        const double nv = v.norm();
        if (nv < tol) continue;
        v /= nv;
        basis.push_back(v);
        out.col(k++) = v;
    }
    if (k != n - d) throw FrameDegeneracy("could not complete the normal frame");
    return out;
}

// Orthonormal complements of the leaf tangents, checked for N_j inside N_k
// whenever X_k <= X_j.
inline NormalFrameField normal_frames(const SampledStratification& s) {
    NormalFrameField nf;
    for (int i = 0; i < s.size(); ++i) nf.frames.push_back(orthonormal_complement(s.tangent(i)));
    for (int k = 0; k < s.size(); ++k)
        for (int j = 0; j < s.size(); ++j) {
            if (j == k || !s.incidence[k][j]) continue;
            const Mat& Nk = nf.frames[k];
            const Mat& Nj = nf.frames[j];
            for (int c = 0; c < Nj.cols(); ++c) {
                const Vec v = Nj.col(c);
                const double off = (v - Nk * (Nk.transpose() * v)).norm();
                nf.worst_monotonicity = std::max(nf.worst_monotonicity, off);
                if (off > 1e-10) nf.monotone = false;
            }
        }
    return nf;
}

struct FrontierReport {
    bool partial_order = true;
    bool frontier = true;
    bool dimension = true;
    bool coherence = true;
    std::vector<std::string> violations;
    bool pass() const { return partial_order && frontier && dimension && coherence; }
};

// Optional displaced node positions: positions[s][p] holds ambient points per node.
using NodeCloud = std::vector<std::vector<std::vector<Vec>>>;

inline NodeCloud node_cloud(const SampledStratification& s) {
    NodeCloud c(s.size());
    for (int i = 0; i < s.size(); ++i) {
        c[i].resize(s.strata[i].plaques.size());
        for (int p = 0; p < static_cast<int>(s.strata[i].plaques.size()); ++p)
            for (int k = 0; k < s.strata[i].plaques[p].box.nodes(); ++k)
                c[i][p].push_back(s.node_point(i, p, k));
    }
    return c;
}

namespace detail {

struct PointHash {
    double cell;
    std::unordered_map<std::string, std::vector<Vec>> b;
    std::string key(const Vec& z, const std::vector<long>& off = {}) const {
        std::string s;
        for (int i = 0; i < z.size(); ++i) {
            long k = static_cast<long>(std::floor(z[i] / cell));
            if (!off.empty()) k += off[i];
            s += std::to_string(k);
            s += ',';
        }
        return s;
    }
    void add(const Vec& z) { b[key(z)].push_back(z); }
    double nearest(const AmbientSpace& amb, const Vec& z) const {
        const int n = static_cast<int>(z.size());
        std::vector<long> off(n, -1);
        double best = std::numeric_limits<double>::infinity();
        while (true) {
            auto it = b.find(key(z, off));
            if (it != b.end())
                for (const auto& p : it->second) best = std::min(best, amb.dist(p, z));
            int i = 0;
            while (i < n && ++off[i] > 1) {
                off[i] = -1;
                ++i;
            }
            if (i == n) break;
        }
        return best;
    }
};

}  // namespace detail

// Frontier axiom, dimension monotonicity and trellis coherence at sample
// resolution.  "cl(X) meets Y" means a closure node of X coincides (within
// meet_tol) with a sample of Y; containment of Y in cl(X) is tested up to the
// resolution of the sampling.
inline FrontierReport check_frontier_and_coherence(const SampledStratification& s,
                                                   const NodeCloud* cloud = nullptr,
                                                   const std::vector<Mat>* tangents = nullptr,
                                                   double meet_tol = 1e-8) {
    FrontierReport rep;
    const int m = s.size();
    NodeCloud own;
    if (!cloud) {
        own = node_cloud(s);
        cloud = &own;
    }
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            if (i != j && s.incidence[i][j] && s.incidence[j][i]) {
                rep.partial_order = false;
                rep.violations.push_back("incidence not antisymmetric between " + s.strata[i].name + " and " + s.strata[j].name);
            }
            for (int k = 0; k < m; ++k)
                if (s.incidence[i][j] && s.incidence[j][k] && !s.incidence[i][k]) {
                    rep.partial_order = false;
                    rep.violations.push_back("incidence not transitive");
                }
            if (s.incidence[i][j] && i > j) {
                rep.partial_order = false;
                rep.violations.push_back("indexing breaks X_i <= X_j => i <= j");
            }
        }
    const double reach = s.resolution + s.leaf_spacing() * std::sqrt(std::max(1, s.ambient.dim())) + 1e-9;
    for (int x = 0; x < m; ++x) {
        detail::PointHash closure{std::max(reach, 1e-6), {}};
        for (int p = 0; p < static_cast<int>(s.strata[x].plaques.size()); ++p)
            for (int k = 0; k < s.strata[x].plaques[p].box.nodes(); ++k)
                if (s.strata[x].plaques[p].in_closure[k]) closure.add((*cloud)[x][p][k]);
        for (int y = 0; y < m; ++y) {
            if (x == y) continue;
            bool meets = false, contained = true;
            for (int p = 0; p < static_cast<int>(s.strata[y].plaques.size()); ++p)
                for (int k = 0; k < s.strata[y].plaques[p].box.nodes(); ++k) {
                    if (!s.strata[y].plaques[p].on_stratum[k]) continue;
                    const double d = closure.nearest(s.ambient, (*cloud)[y][p][k]);
                    if (d <= meet_tol) meets = true;
                    if (!(d <= reach)) contained = false;
                }
            if (!meets) continue;
            if (!contained) {
                rep.frontier = false;
                rep.violations.push_back("closure of " + s.strata[x].name + " meets " + s.strata[y].name +
                                         " without containing it");
            }
            if (s.strata[y].dim > s.strata[x].dim) {
                rep.dimension = false;
                rep.violations.push_back("closure of " + s.strata[x].name + " meets higher-dimensional " +
                                         s.strata[y].name);
            }
        }
    }
    // coherence: the leaves of the lower tube lie inside the leaves of the upper stratum
    for (int x = 0; x < m; ++x)
        for (int y = 0; y < m; ++y) {
            if (x == y || !s.incidence[x][y]) continue;
            const Mat Tx = tangents ? (*tangents)[x] : s.tangent(x);
            const Mat Ty = tangents ? (*tangents)[y] : s.tangent(y);
            if (Tx.cols() == 0 || Ty.cols() == Ty.rows()) continue;
            const Mat Ny = orthonormal_complement(Ty);
            const double off = (Ny.transpose() * Tx).norm();
            if (off > 1e-10) {
                rep.coherence = false;
                rep.violations.push_back("tube leaves of " + s.strata[x].name + " leave the leaves of " + s.strata[y].name);
            }
        }
    return rep;
}

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// CSV with columns stratum_id, plaque_code, leaf_0.., x_0.., one row per sample.
inline void write_stratification_csv(std::ostream& os, const SampledStratification& s,
                                     const NodeCloud* cloud = nullptr) {
    int dmax = 0;
    for (const auto& st : s.strata) dmax = std::max(dmax, st.dim);
    os << "stratum_id,plaque_code";
    for (int a = 0; a < dmax; ++a) os << ",leaf_" << a;
    for (int i = 0; i < s.ambient.dim(); ++i) os << ",x_" << i;
    os << "\n";
    for (int si = 0; si < s.size(); ++si) {
        const Stratum& st = s.strata[si];
        for (int p = 0; p < static_cast<int>(st.plaques.size()); ++p) {
            const Plaque& pl = st.plaques[p];
            for (int k = 0; k < pl.box.nodes(); ++k) {
                if (!pl.on_stratum[k]) continue;
                const auto mi = pl.box.unflatten(k);
                os << si << ',' << pl.code;
                for (int a = 0; a < dmax; ++a) {
                    os << ',';
                    if (a < st.dim) os << fmt17(pl.box.coord(a, mi[a]));
                }
                const Vec x = cloud ? (*cloud)[si][p][k] : s.node_point(si, p, k);
                for (int i = 0; i < x.size(); ++i) os << ',' << fmt17(x[i]);
                os << "\n";
            }
        }
    }
}

}  // namespace lamina
