#pragma once

#include "bsde/solver.hpp"

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace bsde {

/// Answers Y_{t+1} -> Y_t queries (the one-step values of some driver at a fixed t).
using OneStepOracle = std::function<Slice(const Slice& next)>;
/// Answers Q -> Y_t queries at a fixed t (the time-t endpoints).
using EndpointOracle = std::function<Slice(const Slice& terminal)>;
/// F(atom, u, y, 0).
using ZeroHedgingFunction = std::function<Vector(const StepContext&, const Vector& y)>;

inline OneStepOracle one_step_oracle(const ScenarioTree& tree, Driver driver, int t) {
    tree.require_nonterminal(Atom{t, 0});
    return [&tree, d = std::move(driver), t](const Slice& next) {
        if (next.time != t + 1) throw Error(ErrorCode::TimeOutOfRange, "one-step oracle expects a time-(t+1) slice");
        return solve(tree, d, next, t).y.at(t);
    };
}

inline EndpointOracle endpoint_oracle(const ScenarioTree& tree, Driver driver, int t) {
    tree.check_time(t);
    return [&tree, d = std::move(driver), t](const Slice& q) {
        if (q.time != tree.horizon()) throw Error(ErrorCode::TimeOutOfRange, "endpoint oracle expects a terminal slice");
        return solve(tree, d, q, t).y.at(t);
    };
}

inline ZeroHedgingFunction zero_hedging(Driver driver) {
    return [d = std::move(driver)](const StepContext& ctx, const Vector& y) {
        return evaluate(d, *ctx.tree, ctx.atom, y, GainsMatrix::Zero(d.dim, ctx.tree->n_states()));
    };
}

/// Next-time slice equal to k + Z M_{t+1} on the children of `a` and `fill` elsewhere.
inline Slice shifted_increment_slice(const ScenarioTree& tree, Atom a, const Vector& k, const GainsMatrix& z,
                                     double fill = 0.0) {
    Slice next = constant_slice(tree, a.time + 1, Vector::Constant(k.size(), fill));
    const auto inc = increments(tree, a, z);
    for (int j : tree.support(a).indices) next[tree.child(a, j)->index] = k + inc[static_cast<std::size_t>(j)];
    return next;
}

/// phi_Z(k) = phi(k + Z M_{t+1}) read at the atom.
inline Vector phi_at(const ScenarioTree& tree, const OneStepOracle& phi, Atom a, const Vector& k, const GainsMatrix& z) {
    const Slice out = phi(shifted_increment_slice(tree, a, k, z));
    if (out.time != a.time || out.size() != tree.level_size(a.time))
        throw Error(ErrorCode::OracleInconsistent, "oracle returned a slice at the wrong time");
    return out[a.index];
}

namespace detail {

/// Finds k with phi_Z(k) = y.
inline Vector invert_phi(const ScenarioTree& tree, const OneStepOracle& phi, Atom a, const Vector& y,
                         const GainsMatrix& z, double accept) {
    const std::string where = at_path(tree, a);
    if (y.size() == 1) {
        auto g = [&](double k) { return phi_at(tree, phi, a, Vector::Constant(1, k), z)[0] - y[0]; };
        root::ScalarOptions opt;
        opt.accept = accept;
        const auto r = root::bracket_and_bisect(g, y[0] - 1.0, y[0] + 1.0, opt);
        if (r.status == root::Status::NoConvergence)
            throw Error(ErrorCode::OracleInconsistent, "no shift reproduces the requested value" + where);
        if (r.status != root::Status::Converged)
            throw Error(ErrorCode::RootFindDivergence, std::string("phi inversion ") + root::to_string(r.status) + where);
        return Vector::Constant(1, r.x);
    }
    auto g = [&](const Vector& k) { return Vector(phi_at(tree, phi, a, k, z) - y); };
    root::VectorOptions opt;
    opt.accept = accept;
    const auto r = root::damped_newton(g, y, opt);
    if (r.status == root::Status::SingularJacobian)
        throw Error(ErrorCode::OracleInconsistent, "phi is not locally invertible" + where);
    if (r.status != root::Status::Converged)
        throw Error(ErrorCode::RootFindDivergence, std::string("phi inversion ") + root::to_string(r.status) + where);
    return r.x;
}

}  // namespace detail

/// F(t, y, Z) from one-step values: find the shift k whose next value k + Z M maps
/// back to y, then F = y - E[Y_{t+1} | atom] = y - k.
inline Vector recover_from_one_step(const ScenarioTree& tree, const OneStepOracle& oracle, Atom a, const Vector& y,
                                    const GainsMatrix& z, const Tolerances& tol = default_tolerances()) {
    tree.require_nonterminal(a);
    const Vector k = detail::invert_phi(tree, oracle, a, y, z, tol.solve);
    const Slice next = shifted_increment_slice(tree, a, k, z);
    return y - cond_expect(tree, next, a);
}

/// Probes a candidate phi at one atom: strict monotonicity (scalar) or Jacobian
/// invertibility (vector) of k -> phi_Z(k), invariance under equivalent Z, and
/// locality (values outside the atom's children must not matter).
inline DriverProbeReport validate_phi(const ScenarioTree& tree, Atom a, const OneStepOracle& phi, int dim,
                                      const ProbeConfig& probe = {}) {
    tree.require_nonterminal(a);
    DriverProbeReport rep;
    std::mt19937_64 rng(probe.seed);
    const auto ks = detail::grid(probe.y_min, probe.y_max, probe.y_count);
    const int n = tree.n_states();
    const std::string path = detail::path_string(tree.path(a));
    auto add = [&](const char* check, std::string detail) {
        rep.findings.push_back(Finding{check, a.time, path, std::move(detail)});
    };

    for (int s = 0; s < probe.z_samples; ++s) {
        const GainsMatrix z = s == 0 ? GainsMatrix(GainsMatrix::Zero(dim, n)) : detail::random_gains(rng, dim, n, probe.z_scale);
        ++rep.probes;

        const GainsMatrix zp = detail::equivalent_perturbation(tree, a, z, rng, probe.z_scale);
        const Vector k_mid = Vector::Constant(dim, ks[ks.size() / 2]);
        const Vector base = phi_at(tree, phi, a, k_mid, z);
        if (!(max_abs(base - phi_at(tree, phi, a, k_mid, zp)) <= 1e-10))
            add("invariance", "phi changes under an equivalent Z");

        Slice far = shifted_increment_slice(tree, a, k_mid, z, 7.5);
        if (!(max_abs(phi(far)[a.index] - base) <= 1e-10)) add("locality", "phi depends on values outside the atom");

        if (dim == 1) {
            std::vector<double> v;
            for (double k : ks) v.push_back(phi_at(tree, phi, a, Vector::Constant(1, k), z)[0]);
            bool up = false, down = false, flat = false;
            for (std::size_t i = 1; i < v.size(); ++i) {
                const double d = v[i] - v[i - 1];
                if (!std::isfinite(d) || std::abs(d) <= 1e-12 * std::max({1.0, std::abs(v[i]), std::abs(v[i - 1])}))
                    flat = true;
                else if (d > 0)
                    up = true;
                else
                    down = true;
            }
            if (flat || (up && down)) add("injectivity", "k -> phi(k + Z M) is not strictly monotone");
        } else {
            auto h = [&](const Vector& k) { return phi_at(tree, phi, a, k, z); };
            for (double kv : {ks.front(), ks.back()}) {
                const Vector k = Vector::Constant(dim, kv);
                const double cond = root::condition_number(root::fd_jacobian(h, k, h(k), 1e-7));
                if (std::isfinite(cond)) rep.max_condition_number = std::max(rep.max_condition_number, cond);
                if (!std::isfinite(cond) || cond > 1e12) {
                    add("injectivity", "Jacobian of k -> phi(k + Z M) is singular");
                    break;
                }
            }
        }
    }
    return rep;
}

/// Driver F(t, y, Z) = y - phi_Z^{-1}(y), with phis[t] the one-step map at time t.
/// Its explicit inverse is phi_Z itself, so solving with it reproduces phi.
inline Driver derive_driver_from_phi(std::vector<OneStepOracle> phis, int dim) {
    auto shared = std::make_shared<const std::vector<OneStepOracle>>(std::move(phis));
    auto pick = [shared](int t) -> const OneStepOracle& {
        if (t < 0 || static_cast<std::size_t>(t) >= shared->size() || !(*shared)[static_cast<std::size_t>(t)])
            throw Error(ErrorCode::TimeOutOfRange, "no one-step map supplied for time " + std::to_string(t));
        return (*shared)[static_cast<std::size_t>(t)];
    };
    Driver d;
    d.dim = dim;
    d.name = "from_phi";
    d.eval = [pick](const StepContext& ctx, const Vector& y, const GainsMatrix& z) {
        return recover_from_one_step(*ctx.tree, pick(ctx.time()), ctx.atom, y, z);
    };
    d.explicit_inverse = [pick](const StepContext& ctx, const Vector& c, const GainsMatrix& z) {
        return phi_at(*ctx.tree, pick(ctx.time()), ctx.atom, c, z);
    };
    return d;
}

/// Runs Y_{u+1} = Y_u - zh(u, Y_u) (Z = 0) from `start` to the horizon.
inline Slice zero_hedging_forward(const ScenarioTree& tree, const ZeroHedgingFunction& zh, Slice start) {
    for (int u = start.time; u < tree.horizon(); ++u) {
        Slice next{u + 1, std::vector<Vector>(tree.level_size(u + 1))};
        for (Atom a : tree.atoms_at(u)) {
            const Vector v = start[a.index] - zh(StepContext{&tree, a}, start[a.index]);
            for (int j : tree.support(a).indices) next[tree.child(a, j)->index] = v;
        }
        start = std::move(next);
    }
    return start;
}

/// Endpoint pairs (Y_t, Y_T) produced by the zero-hedging recursion from each initial slice.
inline std::vector<std::pair<Slice, Slice>> endpoint_table(const ScenarioTree& tree, const ZeroHedgingFunction& zh,
                                                           const std::vector<Slice>& initial) {
    std::vector<std::pair<Slice, Slice>> out;
    for (const auto& y : initial) out.emplace_back(y, zero_hedging_forward(tree, zh, y));
    return out;
}

/// Deterministic sample of time-t slices used for consistency checks.
inline std::vector<Slice> sample_slices(const ScenarioTree& tree, int t, int dim, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<Slice> out;
    out.push_back(constant_slice(tree, t, Vector::Zero(dim)));
    for (int c = 1; c < count; ++c) {
        Slice s{t, std::vector<Vector>(tree.level_size(t))};
        for (auto& v : s.values) {
            v.resize(dim);
            for (int i = 0; i < dim; ++i) v[i] = u(rng);
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// (zh, endpoints) is consistent when every recursion endpoint maps back to its start.
inline bool is_consistent_pair(const ScenarioTree& tree, const ZeroHedgingFunction& zh, const EndpointOracle& endpoints,
                               int t, int dim, int samples = 4, double tol = 1e-8, std::uint64_t seed = 7) {
    for (const auto& [yt, yT] : endpoint_table(tree, zh, sample_slices(tree, t, dim, samples, seed)))
        if (max_abs_diff(endpoints(yT), yt) > tol) return false;
    return true;
}

/// Shifted zero-hedging function: +k at time t, y -> zh(y + k) - k at time t+1.
/// It generates the same endpoints at time t as zh.
inline ZeroHedgingFunction shift_zero_hedging(ZeroHedgingFunction zh, int t, Vector k) {
    return [zh = std::move(zh), t, k = std::move(k)](const StepContext& ctx, const Vector& y) -> Vector {
        if (ctx.time() == t) return zh(ctx, y) + k;
        if (ctx.time() == t + 1) return zh(ctx, y + k) - k;
        return zh(ctx, y);
    };
}

/// One-step map assembled from endpoints: carry Y_{t+1} to the horizon with the
/// zero-hedging recursion and read the endpoint at time t.
inline OneStepOracle one_step_from_endpoints(const ScenarioTree& tree, ZeroHedgingFunction zh, EndpointOracle endpoints) {
    return [&tree, zh = std::move(zh), e = std::move(endpoints)](const Slice& next) {
        return e(zero_hedging_forward(tree, zh, next));
    };
}

struct EndpointRecovery {
    Vector y;
    Vector f;
    GainsMatrix z;
};

/// From Y_{t+1} (on the children of `a`), recovers (Y_t, F(t, Y_t, Z_t), Z_t).
inline EndpointRecovery recover_from_endpoints(const ScenarioTree& tree, const ZeroHedgingFunction& zh,
                                               const EndpointOracle& endpoints, const Slice& y_next, Atom a,
                                               bool verify_consistency = true) {
    tree.require_nonterminal(a);
    if (y_next.time != a.time + 1) throw Error(ErrorCode::TimeOutOfRange, "y_next must live at t+1");
    if (verify_consistency && !is_consistent_pair(tree, zh, endpoints, a.time, y_next.dim()))
        throw Error(ErrorCode::InconsistentPair, "zero-hedging function and endpoints disagree");
    EndpointRecovery out;
    out.y = endpoints(zero_hedging_forward(tree, zh, y_next))[a.index];
    const auto children = child_values(tree, y_next, a);
    out.f = out.y - cond_expect(tree, children, a);
    out.z = represent_centered(tree, a, children);
    return out;
}

/// F(t, y, Z) from a consistent (zero-hedging, endpoints) pair.
inline Vector recover_driver_from_endpoints(const ScenarioTree& tree, const ZeroHedgingFunction& zh,
                                            const EndpointOracle& endpoints, Atom a, const Vector& y,
                                            const GainsMatrix& z) {
    return recover_from_one_step(tree, one_step_from_endpoints(tree, zh, endpoints), a, y, z);
}

}  // namespace bsde
