#pragma once

#include <lamina/expansion.hpp>
#include <lamina/presets.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace testkit {

using namespace lamina;

// 0-dimensional stratification made of the given points.
inline SampledStratification point_set(AmbientSpace amb, const std::vector<Vec>& pts, double tube) {
    SampledStratification s;
    s.ambient = std::move(amb);
    Stratum st;
    st.name = "P";
    st.dim = 0;
    for (int i = 0; i < s.ambient.dim(); ++i) st.normal_axes.push_back(i);
    st.tube_width = tube;
    Chart c{"P", {}};
    for (std::size_t i = 0; i < pts.size(); ++i) {
        c.plaques.push_back(static_cast<int>(i));
        st.plaques.push_back(point_plaque("p" + std::to_string(i), pts[i]));
    }
    st.charts.push_back(c);
    s.strata = {st};
    s.incidence = {{true}};
    finalize(s);
    return s;
}

inline SampledStratification single_point(double x, double tube, bool circle = false) {
    AmbientSpace amb = circle ? AmbientSpace({Axis::circle(1.0)}) : AmbientSpace::euclidean(1);
    return point_set(amb, {Vec::Constant(1, x)}, tube);
}

// x -> 2x on the circle R/Z
inline EndomorphismSpec doubling() { return poly_product("doubling", AmbientSpace({Axis::circle(1.0)}), {{0.0, 2.0}}); }

inline SampledStratification doubling_grid(int n, double tube) {
    std::vector<Vec> pts;
    for (int k = 0; k < n; ++k) pts.push_back(Vec::Constant(1, static_cast<double>(k) / n));
    return point_set(AmbientSpace({Axis::circle(1.0)}), pts, tube);
}

inline Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

inline Vec v3(double a, double b, double c) {
    Vec v(3);
    v << a, b, c;
    return v;
}

// invariant graph of (theta, 4y + 0.1 cos theta): 30 terms of the series
inline double doubling_sigma(double theta) {
    double s = 0.0;
    for (int k = 0; k < 30; ++k) s += std::pow(4.0, -(k + 1)) * std::cos(std::ldexp(theta, k));
    return -0.1 * s;
}

}  // namespace testkit
