#pragma once

#include "bsde/driver.hpp"
#include "bsde/parallel.hpp"
#include "bsde/root_finding.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace bsde {

struct StepDiagnostics {
    std::string method;  // "explicit", "y-independent", "bisection", "newton"
    int iterations = 0;
    double residual = 0.0;
};

struct OneStepResult {
    Vector y;
    GainsMatrix z;
    StepDiagnostics diag;
};

/// (Y, Z) on [first_time, last_time]; Z is canonical and defined below last_time.
struct BsdeSolution {
    AdaptedProcess y;
    GainsProcess z;
    std::vector<std::vector<StepDiagnostics>> diagnostics;  // per time, per atom

    int first_time() const { return y.first_time; }
    int last_time() const { return y.last_time(); }
};

namespace detail {

inline std::string at_path(const ScenarioTree& tree, Atom a) {
    return " at t=" + std::to_string(a.time) + " path " + path_string(tree.path(a));
}

/// Solves y - F(y, z) = c at the atom, choosing the method from the driver's structure.
inline Vector invert_step(const ScenarioTree& tree, Atom a, const Driver& driver, const Vector& c,
                          const GainsMatrix& z, const Tolerances& tol, StepDiagnostics& diag) {
    const StepContext ctx{&tree, a};
    auto residual_of = [&](const Vector& y) { return Vector(y - evaluate(driver, tree, a, y, z) - c); };

    Vector y;
    if (driver.explicit_inverse) {
        diag.method = "explicit";
        y = driver.explicit_inverse(ctx, c, z);
        diag.iterations = 1;
    } else if (driver.y_independent) {
        diag.method = "y-independent";
        y = c + evaluate(driver, tree, a, c, z);
        diag.iterations = 1;
    } else if (driver.dim == 1) {
        diag.method = "bisection";
        auto g = [&](double v) {
            Vector yv(1);
            yv[0] = v;
            const Vector f = driver.eval(ctx, yv, z);
            return std::isfinite(f[0]) ? v - f[0] - c[0] : NAN;
        };
        root::ScalarOptions opt;
        opt.accept = tol.solve;
        const auto r = root::bracket_and_bisect(g, c[0] - 1.0, c[0] + 1.0, opt);
        diag.iterations = r.iterations;
        if (r.status == root::Status::NonFinite)
            throw Error(ErrorCode::NonFiniteDriverValue, "driver '" + driver.name + "' non-finite" + at_path(tree, a));
        if (r.status != root::Status::Converged)
            throw Error(ErrorCode::RootFindDivergence,
                        std::string("bisection ") + root::to_string(r.status) + at_path(tree, a));
        y = Vector::Constant(1, r.x);
    } else {
        diag.method = "newton";
        auto g = [&](const Vector& v) {
            const Vector f = driver.eval(ctx, v, z);
            return Vector(v - f - c);
        };
        root::VectorOptions opt;
        opt.accept = tol.solve;
        const auto r = root::damped_newton(g, c, opt);
        diag.iterations = r.iterations;
        if (r.status == root::Status::NonFinite)
            throw Error(ErrorCode::NonFiniteDriverValue, "driver '" + driver.name + "' non-finite" + at_path(tree, a));
        if (r.status != root::Status::Converged)
            throw Error(ErrorCode::RootFindDivergence,
                        std::string("newton ") + root::to_string(r.status) + at_path(tree, a));
        y = r.x;
    }
    if (!y.allFinite())
        throw Error(ErrorCode::NonFiniteDriverValue, "one-step solution is non-finite" + at_path(tree, a));
    diag.residual = max_abs(residual_of(y));
    if (diag.residual > tol.solve)
        throw Error(ErrorCode::RootFindDivergence,
                    "residual " + std::to_string(diag.residual) + " above tolerance" + at_path(tree, a));
    return y;
}

}  // namespace detail

/// One backward step at `a`: Z represents the centered next values, and y solves
/// y - F(y, Z) = E[Y_{t+1} | atom].
inline OneStepResult one_step_solve(const ScenarioTree& tree, Atom a, const std::vector<Vector>& next_by_state,
                                    const Driver& driver, const Tolerances& tol = default_tolerances()) {
    OneStepResult out;
    const Vector c = cond_expect(tree, next_by_state, a);
    if (c.size() != driver.dim)
        throw Error(ErrorCode::DimensionMismatch, "terminal values and driver differ in dimension");
    out.z = represent_centered(tree, a, next_by_state);
    out.y = detail::invert_step(tree, a, driver, c, out.z, tol, out.diag);
    return out;
}

inline OneStepResult one_step_solve(const ScenarioTree& tree, Atom a, const Slice& next, const Driver& driver,
                                    const Tolerances& tol = default_tolerances()) {
    return one_step_solve(tree, a, child_values(tree, next, a), driver, tol);
}

/// Backward induction from a terminal slice at time terminal.time down to first_time.
inline BsdeSolution solve(const ScenarioTree& tree, const Driver& driver, const Slice& terminal, int first_time = 0,
                          const Tolerances& tol = default_tolerances()) {
    const int last = terminal.time;
    tree.check_time(last);
    tree.check_time(first_time);
    if (first_time > last) throw Error(ErrorCode::TimeOutOfRange, "first_time after terminal time");
    if (terminal.size() != tree.level_size(last))
        throw Error(ErrorCode::MissingChildValue, "terminal condition must cover every atom at its time");
    for (const auto& v : terminal.values)
        if (v.size() != driver.dim)
            throw Error(ErrorCode::DimensionMismatch, "terminal value dimension differs from driver dimension");

    const auto levels = static_cast<std::size_t>(last - first_time + 1);
    BsdeSolution sol;
    sol.y = AdaptedProcess{driver.dim, first_time, std::vector<Slice>(levels)};
    sol.z = GainsProcess{first_time, std::vector<std::vector<GainsMatrix>>(levels - 1)};
    sol.diagnostics.resize(levels - 1);
    sol.y.at(last) = terminal;

    for (int t = last - 1; t >= first_time; --t) {
        const Slice& next = sol.y.at(t + 1);
        const std::size_t n = tree.level_size(t);
        Slice cur{t, std::vector<Vector>(n)};
        std::vector<GainsMatrix> zs(n);
        std::vector<StepDiagnostics> diags(n);
        parallel_for(n, [&](std::size_t k) {
            const Atom a{t, k};
            auto step = one_step_solve(tree, a, next, driver, tol);
            cur[k] = std::move(step.y);
            zs[k] = std::move(step.z);
            diags[k] = std::move(step.diag);
        });
        sol.y.at(t) = std::move(cur);
        sol.z.at(t) = std::move(zs);
        sol.diagnostics[static_cast<std::size_t>(t - first_time)] = std::move(diags);
    }
    return sol;
}

/// Runs Y_{t+1} = Y_t - F(t, Y_t, Z_t) + Z_t M_{t+1} forward from `start` using z.
inline AdaptedProcess forward_generate(const ScenarioTree& tree, const Driver& driver, const Slice& start,
                                       const GainsProcess& z, int last_time = -1) {
    if (last_time < 0) last_time = tree.horizon();
    AdaptedProcess out{driver.dim, start.time, {start}};
    for (int t = start.time; t < last_time; ++t) {
        const Slice& cur = out.levels.back();
        Slice next{t + 1, std::vector<Vector>(tree.level_size(t + 1))};
        const auto& zt = z.at(t);
        if (zt.size() != tree.level_size(t))
            throw Error(ErrorCode::DimensionMismatch, "gains process does not cover time " + std::to_string(t));
        for (Atom a : tree.atoms_at(t)) {
            const Vector drift = cur[a.index] - evaluate(driver, tree, a, cur[a.index], zt[a.index]);
            const auto inc = increments(tree, a, zt[a.index]);
            for (int j : tree.support(a).indices)
                next[tree.child(a, j)->index] = drift + inc[static_cast<std::size_t>(j)];
        }
        out.levels.push_back(std::move(next));
    }
    return out;
}

inline AdaptedProcess forward_generate(const ScenarioTree& tree, const Driver& driver, const Vector& y0,
                                       const GainsProcess& z) {
    return forward_generate(tree, driver, Slice{0, {y0}}, z);
}

// ---------------------------------------------------------------------------
// Assumption probing
// ---------------------------------------------------------------------------

struct ProbeConfig {
    double y_min = -5.0;
    double y_max = 5.0;
    int y_count = 21;
    int z_samples = 4;
    double z_scale = 1.0;
    int max_atoms_per_level = 8;
    std::uint64_t seed = 20240101;
};

struct Finding {
    std::string check;
    int time = 0;
    std::string path;
    std::string detail;
};

struct DriverProbeReport {
    std::vector<Finding> findings;
    double max_condition_number = 0.0;
    int probes = 0;

    bool has(const std::string& check) const {
        for (const auto& f : findings)
            if (f.check == check) return true;
        return false;
    }
    bool clean() const { return findings.empty(); }
    /// A grid probe can only refute the assumptions, never certify them.
    std::string verdict() const { return clean() ? "no violation found" : "violation found"; }
};

namespace detail {

inline GainsMatrix random_gains(std::mt19937_64& rng, int k, int n, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    GainsMatrix z(k, n);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) z(i, j) = u(rng);
    return z;
}

/// Z plus a perturbation that leaves every realized increment unchanged.
inline GainsMatrix equivalent_perturbation(const ScenarioTree& tree, Atom a, const GainsMatrix& z,
                                           std::mt19937_64& rng, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    GainsMatrix out = z;
    for (int i = 0; i < z.rows(); ++i) {
        const double shift = u(rng);
        for (int j = 0; j < z.cols(); ++j) out(i, j) += shift;
    }
    for (int j = 0; j < z.cols(); ++j)
        if (!tree.support(a).contains(j))
            for (int i = 0; i < z.rows(); ++i) out(i, j) += u(rng);
    return out;
}

inline std::vector<double> grid(double lo, double hi, int count) {
    std::vector<double> g;
    if (count <= 1) return {lo};
    for (int i = 0; i < count; ++i) g.push_back(lo + (hi - lo) * i / (count - 1));
    return g;
}

}  // namespace detail

/// Probes driver structure on a grid: raw invariance under ~_M, bijectivity and
/// monotonicity of y -> y - F(y, Z), and the declared normalization and
/// y-independence flags. Findings are data; nothing here throws for a violation.
inline DriverProbeReport check_driver_assumptions(const ScenarioTree& tree, const Driver& driver,
                                                  const ProbeConfig& probe = {}) {
    DriverProbeReport rep;
    std::mt19937_64 rng(probe.seed);
    const auto ys = detail::grid(probe.y_min, probe.y_max, probe.y_count);
    const int k = driver.dim;
    const int n = tree.n_states();

    auto add = [&](const char* check, Atom a, std::string detail) {
        rep.findings.push_back(Finding{check, a.time, detail::path_string(tree.path(a)), std::move(detail)});
    };

    for (int t = 0; t < tree.horizon(); ++t) {
        const auto atoms = tree.atoms_at(t);
        const std::size_t limit = std::min<std::size_t>(atoms.size(), static_cast<std::size_t>(probe.max_atoms_per_level));
        for (std::size_t ai = 0; ai < limit; ++ai) {
            const Atom a = atoms[ai];
            const StepContext ctx{&tree, a};
            for (int s = 0; s < probe.z_samples; ++s) {
                const GainsMatrix z = s == 0 ? GainsMatrix(GainsMatrix::Zero(k, n)) : detail::random_gains(rng, k, n, probe.z_scale);
                const GainsMatrix zp = detail::equivalent_perturbation(tree, a, z, rng, probe.z_scale);
                ++rep.probes;

                // (a) the raw driver (before canonicalization) should not see the representative
                for (double yv : {ys.front(), ys[ys.size() / 2], ys.back()}) {
                    const Vector y = Vector::Constant(k, yv);
                    const Vector f1 = driver.eval(ctx, y, z);
                    const Vector f2 = driver.eval(ctx, y, zp);
                    if (!(max_abs(f1 - f2) <= 1e-10)) {
                        add("invariance", a, "F changes by " + std::to_string(max_abs(f1 - f2)) +
                                                 " under an equivalent Z");
                        break;
                    }
                }

                const GainsMatrix zc = canonicalize(tree, a, z);
                if (driver.y_independent) {
                    const Vector f1 = driver.eval(ctx, Vector::Constant(k, ys.front()), zc);
                    const Vector f2 = driver.eval(ctx, Vector::Constant(k, ys.back()), zc);
                    if (!(max_abs(f1 - f2) <= 1e-12)) add("y_independent", a, "declared y-independent but F varies in y");
                }
                if (driver.normalized && s == 0) {
                    for (double yv : ys) {
                        const Vector f = driver.eval(ctx, Vector::Constant(k, yv), zc);
                        if (!(max_abs(f) <= 1e-12)) {
                            add("normalized", a, "F(y, 0) = " + std::to_string(max_abs(f)) + " at y = " + std::to_string(yv));
                            break;
                        }
                    }
                }

                // (b) bijectivity of y -> y - F(y, Z)
                if (k == 1) {
                    std::vector<double> h;
                    for (double yv : ys) h.push_back(yv - driver.eval(ctx, Vector::Constant(1, yv), zc)[0]);
                    bool up = false, down = false, flat = false;
                    for (std::size_t i = 1; i < h.size(); ++i) {
                        const double d = h[i] - h[i - 1];
                        const double scale = 1e-12 * std::max({1.0, std::abs(h[i]), std::abs(h[i - 1])});
                        if (!std::isfinite(d) || std::abs(d) <= scale) flat = true;
                        else if (d > 0) up = true;
                        else down = true;
                    }
                    if (flat || (up && down)) {
                        add("injectivity", a, "y - F(y, Z) is not strictly monotone on the probe grid");
                    } else if (down) {
                        add("increasing", a, "y - F(y, Z) is strictly decreasing; comparison condition (iv) fails");
                    }
                } else {
                    auto h = [&](const Vector& y) { return Vector(y - driver.eval(ctx, y, zc)); };
                    for (double yv : {ys.front(), ys[ys.size() / 2], ys.back()}) {
                        const Vector y = Vector::Constant(k, yv);
                        const Matrix jac = root::fd_jacobian(h, y, h(y), 1e-7);
                        const double cond = root::condition_number(jac);
                        if (std::isfinite(cond)) rep.max_condition_number = std::max(rep.max_condition_number, cond);
                        if (!std::isfinite(cond) || cond > 1e12) {
                            add("injectivity", a, "finite-difference Jacobian of y - F(y, Z) is singular (cond " +
                                                      std::to_string(cond) + ")");
                            break;
                        }
                    }
                }
            }
        }
    }
    return rep;
}

}  // namespace bsde
