#pragma once

#include "core.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace lamina {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
    bool contains(double x) const { return lo <= x && x <= hi; }
};

struct Cylinder {
    Interval iv;
    std::string code;
};

// Depth-d cover of K = {x in [-beta, beta] : the orbit of x never enters the basin}
// for x -> x^2 + c.
struct CantorSet {
    double c = -1.0;
    int depth = 0;
    double beta = 0.0;
    int seed_period = 1;
    std::vector<Interval> basin_seed;
    std::vector<Cylinder> cylinders;

    double map(double x) const { return x * x + c; }
    bool in_seed(double x) const {
        for (const auto& b : basin_seed)
            if (b.lo < x && x < b.hi) return true;
        return false;
    }
    double total_length() const {
        double s = 0.0;
        for (const auto& cy : cylinders) s += cy.iv.width();
        return s;
    }
    const Cylinder* find(double x) const {
        for (const auto& cy : cylinders)
            if (cy.iv.contains(x)) return &cy;
        return nullptr;
    }
};

inline double positive_fixed_point(double c) {
    if (c > 0.25) throw std::invalid_argument("x^2 + c has no real fixed point for c > 1/4");
    return 0.5 * (1.0 + std::sqrt(1.0 - 4.0 * c));
}

namespace detail {

inline Interval quad_image(const Interval& iv, double c) {
    const double a = iv.lo * iv.lo, b = iv.hi * iv.hi;
    const double lo = (iv.lo <= 0.0 && iv.hi >= 0.0) ? 0.0 : std::min(a, b);
    return {lo + c, std::max(a, b) + c};
}

// closed interval minus a union of open intervals
inline std::vector<Interval> subtract_open(Interval iv, const std::vector<Interval>& holes) {
    std::vector<Interval> out{iv};
    for (const auto& h : holes) {
        std::vector<Interval> next;
        for (const auto& p : out) {
            if (h.hi <= p.lo || h.lo >= p.hi) {
                next.push_back(p);
                continue;
            }
            if (p.lo <= h.lo) next.push_back({p.lo, h.lo});
            if (h.hi <= p.hi) next.push_back({h.hi, p.hi});
        }
        out.swap(next);
    }
    return out;
}

}  // namespace detail

// seed_period is the k with f^k(cl B) inside B
inline CantorSet julia_cantor(double c, int depth, const std::vector<Interval>& basin_seed,
                              int seed_period = 2) {
    if (depth < 1) throw std::invalid_argument("julia_cantor needs depth >= 1");
    CantorSet k;
    k.c = c;
    k.depth = depth;
    k.beta = positive_fixed_point(c);
    k.seed_period = seed_period;
    k.basin_seed = basin_seed;

    for (const auto& b : basin_seed) {
        Interval img = b;
        for (int i = 0; i < seed_period; ++i) img = detail::quad_image(img, c);
        bool inside = false;
        for (const auto& t : basin_seed)
            if (t.lo < img.lo && img.hi < t.hi) inside = true;
        if (!inside)
            throw BasinNotInvariant("f^" + std::to_string(seed_period) + " maps [" +
                                    std::to_string(b.lo) + ", " + std::to_string(b.hi) + "] to [" +
                                    std::to_string(img.lo) + ", " + std::to_string(img.hi) +
                                    "], not inside the seed");
    }

    const double beta = k.beta;
    std::vector<Cylinder> level;
    for (const auto& p : detail::subtract_open({-beta, beta}, basin_seed)) {
        if (p.width() < 0.0) continue;
        level.push_back({p, 0.5 * (p.lo + p.hi) < 0.0 ? "-" : "+"});
    }
    for (int d = 2; d <= depth; ++d) {
        std::vector<Cylinder> next;
        for (const char s : {'-', '+'}) {
            for (const auto& w : level) {
                const double lo = std::max(w.iv.lo, c), hi = std::min(w.iv.hi, beta);
                if (lo > hi) continue;
                const double a = std::sqrt(lo - c), b = std::sqrt(hi - c);
                const Interval pre = s == '+' ? Interval{a, b} : Interval{-b, -a};
                const auto pieces = detail::subtract_open(pre, basin_seed);
                for (std::size_t i = 0; i < pieces.size(); ++i) {
                    std::string code = std::string(1, s) + w.code;
                    if (pieces.size() > 1) code += "." + std::to_string(i);
                    next.push_back({pieces[i], code});
                }
            }
        }
        std::sort(next.begin(), next.end(),
                  [](const Cylinder& x, const Cylinder& y) { return x.iv.lo < y.iv.lo; });
        level.swap(next);
    }
    k.cylinders = std::move(level);
    return k;
}

inline std::string itinerary(const CantorSet& k, double x, int length) {
    std::string s;
    for (int i = 0; i < length; ++i) {
        s += x < 0.0 ? '-' : '+';
        x = k.map(x);
    }
    return s;
}

// Repelling fixed points of x^2 + c lying in K together with their real
// preimages in K up to `levels` backward steps, sorted ascending.
inline std::vector<double> cantor_points(const CantorSet& k, int levels) {
    std::vector<double> seeds;
    const double disc = 1.0 - 4.0 * k.c;
    const double fp[2] = {0.5 * (1.0 + std::sqrt(disc)), 0.5 * (1.0 - std::sqrt(disc))};
    for (double p : fp)
        if (std::abs(2.0 * p) > 1.0 && !k.in_seed(p)) seeds.push_back(p);
    std::vector<double> all = seeds, frontier = seeds;
    for (int l = 0; l < levels; ++l) {
        std::vector<double> next;
        for (double p : frontier) {
            if (p < k.c) continue;
            const double r = std::sqrt(p - k.c);
            for (double q : {r, -r}) {
                if (k.in_seed(q)) continue;
                bool seen = false;
                for (double a : all)
                    if (std::abs(a - q) < 1e-13) seen = true;
                if (!seen) {
                    all.push_back(q);
                    next.push_back(q);
                }
            }
        }
        frontier.swap(next);
    }
    std::sort(all.begin(), all.end());
    return all;
}

// Gaps of the sampled K: consecutive sample points with no deeper sample in
// between.  Intervals that still hide unresolved points of K are skipped.
inline std::vector<Interval> cantor_gaps(const CantorSet& k, int levels, int lookahead = 4) {
    const auto pts = cantor_points(k, levels);
    const auto deep = cantor_points(k, levels + lookahead);
    std::vector<Interval> gaps;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double a = pts[i], b = pts[i + 1];
        bool hidden = false;
        for (double q : deep)
            if (q > a + 1e-13 && q < b - 1e-13) hidden = true;
        if (!hidden) gaps.push_back({a, b});
    }
    return gaps;
}

// widest interval between consecutive sample points that is not a resolved gap
inline double unresolved_width(const CantorSet& k, int levels, int lookahead = 4) {
    const auto pts = cantor_points(k, levels);
    const auto gaps = cantor_gaps(k, levels, lookahead);
    double w = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        bool is_gap = false;
        for (const auto& g : gaps)
            if (g.lo == pts[i] && g.hi == pts[i + 1]) is_gap = true;
        if (!is_gap) w = std::max(w, pts[i + 1] - pts[i]);
    }
    // the extreme points may still be short of +-beta
    if (!pts.empty()) {
        w = std::max(w, pts.front() + k.beta);
        w = std::max(w, k.beta - pts.back());
    }
    return w;
}

}  // namespace lamina
