#pragma once

#include "strata.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace lamina {

namespace detail {

// Catmull-Rom weights for p(t) between nodes 0 and 1 of (-1, 0, 1, 2), and their t-derivatives.
inline void catmull_rom_weights(double t, std::array<double, 4>& w, std::array<double, 4>& dw) {
    const double t2 = t * t, t3 = t2 * t;
    w = {0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0), 0.5 * (-3.0 * t3 + 4.0 * t2 + t),
         0.5 * (t3 - t2)};
    dw = {0.5 * (-3.0 * t2 + 4.0 * t - 1.0), 0.5 * (9.0 * t2 - 10.0 * t), 0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
          0.5 * (3.0 * t2 - 2.0 * t)};
}

}  // namespace detail

// Tensor Catmull-Rom interpolant of a vector field stored per node of a
// plaque grid.  Periodic axes wrap; beyond the ends of an open axis the
// stencil uses linear ghost nodes 2 v_0 - v_1.
struct PlaqueInterpolant {
    const LeafBox* box = nullptr;
    const std::vector<Vec>* values = nullptr;

    struct Result {
        Vec value;
        Mat grad;  // column a = derivative along leaf axis a
    };

    Result eval(const std::vector<double>& u, bool want_grad = true) const {
        const int d = box->dim();
        const int n = static_cast<int>((*values)[0].size());
        Result r;
        if (d == 0) {
            r.value = (*values)[0];
            r.grad = Mat::Zero(n, 0);
            return r;
        }
        // per axis: base index, weights over 4 stencil nodes expressed as weights on real nodes
        std::vector<std::array<int, 6>> idx(d);
        std::vector<std::array<double, 6>> wt(d), dwt(d);
        std::vector<int> len(d);
        for (int a = 0; a < d; ++a) {
            const int m = box->count[a];
            const double h = box->spacing(a);
            double s = h > 0.0 ? (u[a] - box->lo[a]) / h : 0.0;
            int i0;
            if (box->periodic[a]) {
                i0 = static_cast<int>(std::floor(s));
                s -= i0;
            } else {
                i0 = std::clamp(static_cast<int>(std::floor(s)), 0, m - 2);
                s -= i0;
            }
            std::array<double, 4> w, dw;
            detail::catmull_rom_weights(s, w, dw);
            const double inv = h > 0.0 ? 1.0 / h : 0.0;
            int k = 0;
            auto push = [&](int node, double ww, double dd) {
                for (int q = 0; q < k; ++q)
                    if (idx[a][q] == node) {
                        wt[a][q] += ww;
                        dwt[a][q] += dd;
                        return;
                    }
                idx[a][k] = node;
                wt[a][k] = ww;
                dwt[a][k] = dd;
                ++k;
            };
            for (int j = 0; j < 4; ++j) {
                int node = i0 - 1 + j;
                const double ww = w[j], dd = dw[j] * inv;
                if (box->periodic[a]) {
                    push(((node % m) + m) % m, ww, dd);
                } else if (node < 0) {
                    // ghost: 2 v_0 - v_1
                    push(0, 2.0 * ww, 2.0 * dd);
                    push(1, -ww, -dd);
                } else if (node >= m) {
                    push(m - 1, 2.0 * ww, 2.0 * dd);
                    push(m - 2, -ww, -dd);
                } else {
                    push(node, ww, dd);
                }
            }
            len[a] = k;
        }
        r.value = Vec::Zero(n);
        r.grad = Mat::Zero(n, want_grad ? d : 0);
        std::vector<int> c(d, 0);
        while (true) {
            std::vector<int> node(d);
            double w = 1.0;
            for (int a = 0; a < d; ++a) {
                node[a] = idx[a][c[a]];
                w *= wt[a][c[a]];
            }
            const Vec& v = (*values)[box->flatten(node)];
            r.value += w * v;
            if (want_grad)
                for (int g = 0; g < d; ++g) {
                    double wg = 1.0;
                    for (int a = 0; a < d; ++a) wg *= a == g ? dwt[a][c[a]] : wt[a][c[a]];
                    r.grad.col(g) += wg * v;
                }
            int a = 0;
            while (a < d && ++c[a] >= len[a]) {
                c[a] = 0;
                ++a;
            }
            if (a == d) break;
        }
        return r;
    }
};

}  // namespace lamina
