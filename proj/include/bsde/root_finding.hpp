#pragma once

#include "bsde/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace bsde::root {

enum class Status { Converged, NoBracket, NoConvergence, NonFinite, SingularJacobian };

inline const char* to_string(Status s) {
    switch (s) {
        case Status::Converged: return "converged";
        case Status::NoBracket: return "no-bracket";
        case Status::NoConvergence: return "no-convergence";
        case Status::NonFinite: return "non-finite";
        case Status::SingularJacobian: return "singular-jacobian";
    }
    return "unknown";
}

struct ScalarResult {
    double x = 0.0;
    double residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    Status status = Status::NoConvergence;
};

struct ScalarOptions {
    double residual_target = 1e-12;
    double accept = 1e-10;
    double max_expansion = 1099511627776.0;  // 2^40 times the initial half-width
    double x_tolerance = 0.0;                // optional early stop on bracket width
    int max_bisections = 400;
};

/// Bracket expansion around [lo, hi] (doubling the half-width) followed by bisection.
/// Works for increasing and decreasing g alike; only a sign change is required.
inline ScalarResult bracket_and_bisect(const std::function<double(double)>& g, double lo, double hi,
                                       const ScalarOptions& opt = {}) {
    ScalarResult r;
    const double center = 0.5 * (lo + hi);
    const double half0 = std::max(0.5 * (hi - lo), 1e-300);
    double half = half0;
    double glo = g(lo), ghi = g(hi);
    int evals = 2;
    auto finite = [](double v) { return std::isfinite(v); };
    while (true) {
        if (!finite(glo) || !finite(ghi)) {
            r.status = Status::NonFinite;
            r.iterations = evals;
            return r;
        }
        if (glo == 0.0) return ScalarResult{lo, 0.0, evals, Status::Converged};
        if (ghi == 0.0) return ScalarResult{hi, 0.0, evals, Status::Converged};
        if ((glo < 0.0) != (ghi < 0.0)) break;
        if (half * 2.0 > half0 * opt.max_expansion) {
            r.status = Status::NoBracket;
            r.x = std::abs(glo) < std::abs(ghi) ? lo : hi;
            r.residual = std::min(std::abs(glo), std::abs(ghi));
            r.iterations = evals;
            return r;
        }
        half *= 2.0;
        lo = center - half;
        hi = center + half;
        glo = g(lo);
        ghi = g(hi);
        evals += 2;
    }

    double best_x = std::abs(glo) < std::abs(ghi) ? lo : hi;
    double best_g = std::min(std::abs(glo), std::abs(ghi));
    for (int it = 0; it < opt.max_bisections; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double gm = g(mid);
        ++evals;
        if (!finite(gm)) {
            r.status = Status::NonFinite;
            r.iterations = evals;
            return r;
        }
        if (std::abs(gm) < best_g) {
            best_g = std::abs(gm);
            best_x = mid;
        }
        if (best_g <= opt.residual_target) break;
        if ((gm < 0.0) == (glo < 0.0)) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
            ghi = gm;
        }
        if (opt.x_tolerance > 0.0 && hi - lo <= opt.x_tolerance && best_g <= opt.accept) break;
    }
    r.x = best_x;
    r.residual = best_g;
    r.iterations = evals;
    r.status = best_g <= opt.accept ? Status::Converged : Status::NoConvergence;
    return r;
}

struct VectorResult {
    Vector x;
    double residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    double jacobian_condition = std::numeric_limits<double>::quiet_NaN();
    Status status = Status::NoConvergence;
};

struct VectorOptions {
    double residual_target = 1e-12;
    double accept = 1e-10;
    double fd_step = 1e-7;
    int max_iterations = 100;
    int max_halvings = 40;
};

/// Forward-difference Jacobian of g at x with per-coordinate step h * max(1, |x_i|).
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& g, const Vector& x, const Vector& gx,
                          double h) {
    Matrix jac(gx.size(), x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vector xp = x;
        const double step = h * std::max(1.0, std::abs(x[i]));
        xp[i] += step;
        jac.col(i) = (g(xp) - gx) / step;
    }
    return jac;
}

inline double condition_number(const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0) return std::numeric_limits<double>::quiet_NaN();
    const double smin = s[s.size() - 1];
    return smin == 0.0 ? std::numeric_limits<double>::infinity() : s[0] / smin;
}

/// Damped Newton: full step first, halved while the max-norm residual increases.
inline VectorResult damped_newton(const std::function<Vector(const Vector&)>& g, Vector x,
                                  const VectorOptions& opt = {}) {
    VectorResult r;
    Vector gx = g(x);
    if (!gx.allFinite()) {
        r.x = x;
        r.status = Status::NonFinite;
        return r;
    }
    double res = max_abs(gx);
    int it = 0;
    for (; it < opt.max_iterations && res > opt.residual_target; ++it) {
        const Matrix jac = fd_jacobian(g, x, gx, opt.fd_step);
        if (!jac.allFinite()) {
            r.status = Status::NonFinite;
            break;
        }
        Eigen::ColPivHouseholderQR<Matrix> qr(jac);
        if (qr.rank() < jac.cols()) {
            r.jacobian_condition = condition_number(jac);
            r.x = x;
            r.residual = res;
            r.iterations = it;
            r.status = Status::SingularJacobian;
            return r;
        }
        const Vector step = qr.solve(-gx);
        double lambda = 1.0;
        Vector xn = x + step;
        Vector gn = g(xn);
        int halvings = 0;
        while ((!gn.allFinite() || max_abs(gn) > res) && halvings < opt.max_halvings) {
            lambda *= 0.5;
            xn = x + lambda * step;
            gn = g(xn);
            ++halvings;
        }
        if (!gn.allFinite()) {
            r.status = Status::NonFinite;
            break;
        }
        if (max_abs(gn) >= res && halvings == opt.max_halvings) break;
        x = xn;
        gx = gn;
        res = max_abs(gx);
    }
    r.x = x;
    r.residual = res;
    r.iterations = it;
    if (r.status != Status::NonFinite) r.status = res <= opt.accept ? Status::Converged : Status::NoConvergence;
    return r;
}

}  // namespace bsde::root
