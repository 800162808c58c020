#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace lamina {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Every failure mode raised by the library derives from Error so callers can
// map the kind() string onto exit codes or report fields.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

#define LAMINA_ERROR(Name)                                                   \
    struct Name : Error {                                                    \
        explicit Name(const std::string& w) : Error(#Name, w) {}             \
    }

LAMINA_ERROR(UnsupportedOrder);
LAMINA_ERROR(BasinNotInvariant);
LAMINA_ERROR(FrameDegeneracy);
LAMINA_ERROR(OrbitLeavesSamples);
LAMINA_ERROR(NoValidN);
LAMINA_ERROR(ConeSearchFailed);
LAMINA_ERROR(SingularTransfer);
LAMINA_ERROR(NewtonDiverged);
LAMINA_ERROR(FiberCapExceeded);
LAMINA_ERROR(SingularJacobian);
LAMINA_ERROR(NoConvergence);
LAMINA_ERROR(FiltrationFailed);
LAMINA_ERROR(RetractionFailed);
LAMINA_ERROR(StrataOrderViolation);
LAMINA_ERROR(ConfigError);

#undef LAMINA_ERROR

enum class AxisKind { Line, Circle };

struct Axis {
    AxisKind kind = AxisKind::Line;
    double period = 0.0;

    static Axis line() { return {AxisKind::Line, 0.0}; }
    static Axis circle(double period) { return {AxisKind::Circle, period}; }
};

// Flat product of lines and circles. The exponential map is translation.
struct AmbientSpace {
    std::vector<Axis> axes;

    AmbientSpace() = default;
    explicit AmbientSpace(std::vector<Axis> a) : axes(std::move(a)) {
        if (axes.empty()) throw std::invalid_argument("ambient dimension must be >= 1");
        for (const auto& ax : axes)
            if (ax.kind == AxisKind::Circle && !(ax.period > 0.0))
                throw std::invalid_argument("circle period must be positive");
    }
    static AmbientSpace euclidean(int n) { return AmbientSpace(std::vector<Axis>(n, Axis::line())); }

    int dim() const { return static_cast<int>(axes.size()); }
    bool is_circle(int i) const { return axes[i].kind == AxisKind::Circle; }

    // representative in [0, period) on circle axes
    Vec wrap(Vec x) const {
        for (int i = 0; i < dim(); ++i)
            if (is_circle(i)) {
                const double p = axes[i].period;
                x[i] = x[i] - p * std::floor(x[i] / p);
                if (x[i] >= p) x[i] = 0.0;
            }
        return x;
    }

    // minimal-image difference a - b
    Vec diff(const Vec& a, const Vec& b) const {
        Vec d = a - b;
        for (int i = 0; i < dim(); ++i)
            if (is_circle(i)) {
                const double p = axes[i].period;
                d[i] -= p * std::round(d[i] / p);
            }
        return d;
    }

    double dist(const Vec& a, const Vec& b) const { return diff(a, b).norm(); }

    // translation capped at radius cap (cap <= 0 means uncapped)
    Vec exp(const Vec& x, const Vec& v, double cap = 0.0) const {
        Vec step = v;
        const double n = v.norm();
        if (cap > 0.0 && n > cap) step *= cap / n;
        return wrap(x + step);
    }
};

inline Vec unit(int n, int i) {
    Vec e = Vec::Zero(n);
    e[i] = 1.0;
    return e;
}

// smallest singular value; 0 for an empty matrix
inline double sigma_min(const Mat& a) {
    if (a.rows() == 0 || a.cols() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(a);
    return svd.singularValues().minCoeff();
}

inline double op_norm(const Mat& a) {
    if (a.rows() == 0 || a.cols() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(a);
    return svd.singularValues().maxCoeff();
}

}  // namespace lamina
