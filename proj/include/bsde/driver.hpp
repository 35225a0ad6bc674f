#pragma once

#include "bsde/representation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace bsde {

/// Where a driver is being evaluated: the tree and the current (non-terminal) atom.
struct StepContext {
    const ScenarioTree* tree = nullptr;
    Atom atom;

    int time() const { return atom.time; }
    const Vector& kernel() const { return tree->kernel(atom); }
    const SupportSet& support() const { return tree->support(atom); }

    /// Realized increments Z (e_j - p), indexed by next state (empty off-support).
    std::vector<Vector> increments(const GainsMatrix& z) const { return bsde::increments(*tree, atom, z); }
};

/// F(atom, t, y, Z) -> R^K. `eval` must be pure and safe to call concurrently.
/// The solver always hands it the canonical representative of Z.
struct Driver {
    using Eval = std::function<Vector(const StepContext&, const Vector& y, const GainsMatrix& z)>;
    using Inverse = std::function<Vector(const StepContext&, const Vector& c, const GainsMatrix& z)>;

    int dim = 1;
    std::string name;
    Eval eval;
    bool y_independent = false;
    bool normalized = false;
    Inverse explicit_inverse;  // solves y - F(y, Z) = c when set
};

/// Evaluates the driver on the canonical form of z and checks the result.
inline Vector evaluate(const Driver& d, const ScenarioTree& tree, Atom a, const Vector& y, const GainsMatrix& z) {
    const StepContext ctx{&tree, a};
    Vector out = d.eval(ctx, y, canonicalize(tree, a, z));
    if (out.size() != d.dim)
        throw Error(ErrorCode::DimensionMismatch, "driver '" + d.name + "' returned a vector of wrong length");
    if (!out.allFinite())
        throw Error(ErrorCode::NonFiniteDriverValue, "driver '" + d.name + "' returned a non-finite value at path " +
                                                         detail::path_string(tree.path(a)));
    return out;
}

namespace drivers {

inline Driver zero(int k = 1) {
    Driver d;
    d.dim = k;
    d.name = "zero";
    d.eval = [k](const StepContext&, const Vector&, const GainsMatrix&) { return Vector(Vector::Zero(k)); };
    d.y_independent = true;
    d.normalized = true;
    return d;
}

/// F = f + A y + sum_j c_j Z (e_j - p).
struct LinearParams {
    Matrix a;               // K x K
    Vector f;               // K
    std::vector<double> c;  // one weight per state (may be empty)
};

inline Driver linear(LinearParams params) {
    const int k = static_cast<int>(params.a.rows());
    if (params.a.cols() != k || params.f.size() != k)
        throw Error(ErrorCode::InvalidParams, "linear driver needs a square A and matching f");
    Driver d;
    d.dim = k;
    d.name = "linear";
    d.y_independent = params.a.isZero(0.0);
    d.normalized = d.y_independent && params.f.isZero(0.0);
    d.eval = [p = std::move(params)](const StepContext& ctx, const Vector& y, const GainsMatrix& z) {
        Vector out = p.f + p.a * y;
        if (!p.c.empty()) {
            const auto inc = ctx.increments(z);
            for (int j : ctx.support().indices)
                if (static_cast<std::size_t>(j) < p.c.size()) out += p.c[static_cast<std::size_t>(j)] * inc[static_cast<std::size_t>(j)];
        }
        return out;
    };
    return d;
}

enum class TiltKind { Min, Max };

/// Componentwise gamma * min_j (or max_j) of the realized increments. Normalized,
/// independent of y, and balanced for 0 <= gamma < 1.
inline Driver tilt(int k, double gamma, TiltKind kind = TiltKind::Min) {
    Driver d;
    d.dim = k;
    d.name = kind == TiltKind::Min ? "tilt_min" : "tilt_max";
    d.y_independent = true;
    d.normalized = true;
    d.eval = [k, gamma, kind](const StepContext& ctx, const Vector&, const GainsMatrix& z) {
        const auto inc = ctx.increments(z);
        Vector out(k);
        for (int i = 0; i < k; ++i) {
            double best = kind == TiltKind::Min ? INFINITY : -INFINITY;
            for (int j : ctx.support().indices) {
                const double v = inc[static_cast<std::size_t>(j)][i];
                best = kind == TiltKind::Min ? std::min(best, v) : std::max(best, v);
            }
            out[i] = gamma * best;
        }
        return out;
    };
    return d;
}

/// Componentwise -(1/theta) log E_p[exp(-theta Z (e_j - p))].
inline Driver entropic(int k, double theta) {
    if (!(theta > 0.0)) throw Error(ErrorCode::InvalidParams, "entropic driver needs theta > 0");
    Driver d;
    d.dim = k;
    d.name = "entropic";
    d.y_independent = true;
    d.normalized = true;
    d.eval = [k, theta](const StepContext& ctx, const Vector&, const GainsMatrix& z) {
        const auto inc = ctx.increments(z);
        const auto& p = ctx.kernel();
        Vector out(k);
        for (int i = 0; i < k; ++i) {
            double m = -INFINITY;
            for (int j : ctx.support().indices) m = std::max(m, -theta * inc[static_cast<std::size_t>(j)][i]);
            double s = 0.0;
            for (int j : ctx.support().indices) s += p[j] * std::exp(-theta * inc[static_cast<std::size_t>(j)][i] - m);
            out[i] = -(m + std::log(s)) / theta;
        }
        return out;
    };
    return d;
}

/// F = f + alpha * sin(y) componentwise, plus an optional min-tilt in Z.
/// y - F(y, Z) is strictly increasing when every |alpha_i| < 1.
inline Driver sine(Vector alpha, Vector f, double gamma = 0.0) {
    const int k = static_cast<int>(alpha.size());
    if (f.size() != k) throw Error(ErrorCode::InvalidParams, "sine driver needs alpha and f of equal length");
    Driver d;
    d.dim = k;
    d.name = "sine";
    d.y_independent = alpha.isZero(0.0);
    d.normalized = d.y_independent && f.isZero(0.0);
    const Driver tilt_part = tilt(k, gamma);
    d.eval = [alpha = std::move(alpha), f = std::move(f), tilt_part](const StepContext& ctx, const Vector& y,
                                                                     const GainsMatrix& z) {
        Vector out = f + alpha.cwiseProduct(y.array().sin().matrix());
        return Vector(out + tilt_part.eval(ctx, y, z));
    };
    return d;
}

/// Scalar driver tabulated on a grid over (y, a_0, ..., a_{N-1}), where a_j is the
/// realized increment on outcome j (zero off-support). Multilinear interpolation,
/// clamped to the grid edges.
struct TabularParams {
    std::vector<std::vector<double>> axes;  // axes[0] is y; axes[1 + j] is outcome j
    std::vector<double> values;             // row-major, last axis fastest
    bool y_independent = false;
    bool normalized = false;
};

inline double multilinear(const std::vector<std::vector<double>>& axes, const std::vector<double>& values,
                          const std::vector<double>& point) {
    const std::size_t dims = axes.size();
    std::vector<std::size_t> lo(dims);
    std::vector<double> w(dims);
    for (std::size_t d = 0; d < dims; ++d) {
        const auto& ax = axes[d];
        if (ax.size() == 1) {
            lo[d] = 0;
            w[d] = 0.0;
            continue;
        }
        const double x = std::clamp(point[d], ax.front(), ax.back());
        auto it = std::upper_bound(ax.begin(), ax.end(), x);
        std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - ax.begin()) - 1));
        i = std::min(i, ax.size() - 2);
        lo[d] = i;
        w[d] = (x - ax[i]) / (ax[i + 1] - ax[i]);
    }
    double acc = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << dims); ++corner) {
        double weight = 1.0;
        std::size_t flat = 0;
        for (std::size_t d = 0; d < dims; ++d) {
            const bool up = (corner >> d) & 1U;
            if (up && axes[d].size() == 1) {
                weight = 0.0;
                break;
            }
            weight *= up ? w[d] : 1.0 - w[d];
            flat = flat * axes[d].size() + lo[d] + (up ? 1 : 0);
        }
        if (weight != 0.0) acc += weight * values[flat];
    }
    return acc;
}

inline Driver tabular(TabularParams params, int n_states) {
    if (params.axes.size() != static_cast<std::size_t>(n_states) + 1)
        throw Error(ErrorCode::InvalidParams, "tabular driver needs one y axis plus one axis per state");
    std::size_t total = 1;
    for (const auto& ax : params.axes) {
        if (ax.empty()) throw Error(ErrorCode::InvalidParams, "tabular axis is empty");
        for (std::size_t i = 1; i < ax.size(); ++i)
            if (!(ax[i] > ax[i - 1])) throw Error(ErrorCode::InvalidParams, "tabular axis must be strictly increasing");
        total *= ax.size();
    }
    if (params.values.size() != total)
        throw Error(ErrorCode::InvalidParams, "tabular values have " + std::to_string(params.values.size()) +
                                                  " entries, grid needs " + std::to_string(total));
    Driver d;
    d.dim = 1;
    d.name = "tabular";
    d.y_independent = params.y_independent;
    d.normalized = params.normalized;
    d.eval = [p = std::move(params)](const StepContext& ctx, const Vector& y, const GainsMatrix& z) {
        const auto inc = ctx.increments(z);
        std::vector<double> point(p.axes.size(), 0.0);
        point[0] = y[0];
        for (int j : ctx.support().indices) point[static_cast<std::size_t>(j) + 1] = inc[static_cast<std::size_t>(j)][0];
        Vector out(1);
        out[0] = multilinear(p.axes, p.values, point);
        return out;
    };
    return d;
}

/// F + delta, used to build ordered driver pairs for comparison.
inline Driver shifted(Driver base, Vector delta) {
    Driver d = base;
    d.name = base.name + "_shifted";
    d.normalized = base.normalized && delta.isZero(0.0);
    d.eval = [b = std::move(base.eval), delta = std::move(delta)](const StepContext& ctx, const Vector& y,
                                                                   const GainsMatrix& z) {
        return Vector(b(ctx, y, z) + delta);
    };
    d.explicit_inverse = nullptr;
    return d;
}

}  // namespace drivers
}  // namespace bsde
