#pragma once

#include "bsde/nlexp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace bsde {

/// Scalar map on terminal variables.
struct StaticExpectation {
    std::string name;
    std::function<double(const Slice& q)> eval;
    bool monotone_declared = true;
};

enum class StaticKind { Expectation, Essinf, Mixture, Entropic };

struct StaticParams {
    std::vector<double> weights;  // Expectation: per terminal atom; empty means tree probabilities
    double alpha = 1.0;           // Mixture: alpha * E + (1 - alpha) * essinf
    double gamma = 1.0;           // Entropic: -(1/gamma) log E[exp(-gamma Q)]
};

namespace detail {

inline void require_scalar_terminal(const ScenarioTree& tree, const Slice& q) {
    if (q.time != tree.horizon() || q.size() != tree.level_size(tree.horizon()))
        throw Error(ErrorCode::TimeOutOfRange, "static map needs a terminal variable");
    if (q.dim() != 1) throw Error(ErrorCode::DimensionMismatch, "static maps are scalar");
}

}  // namespace detail

inline StaticExpectation builtin_static(const ScenarioTree& tree, StaticKind kind, const StaticParams& params = {}) {
    const int T = tree.horizon();
    std::vector<double> prob;
    for (Atom a : tree.atoms_at(T)) prob.push_back(tree.probability(a));

    StaticExpectation e;
    switch (kind) {
        case StaticKind::Expectation: {
            std::vector<double> w = params.weights.empty() ? prob : params.weights;
            if (w.size() != prob.size())
                throw Error(ErrorCode::InvalidParams, "expected one weight per terminal atom");
            double sum = 0.0;
            for (double x : w) {
                if (!(x >= 0.0) || !std::isfinite(x)) throw Error(ErrorCode::InvalidParams, "weights must be non-negative");
                sum += x;
            }
            if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidParams, "weights must sum to 1");
            e.name = "expectation";
            e.eval = [&tree, w](const Slice& q) {
                detail::require_scalar_terminal(tree, q);
                double s = 0.0;
                for (std::size_t d = 0; d < w.size(); ++d) s += w[d] * q[d][0];
                return s;
            };
            break;
        }
        case StaticKind::Essinf:
            e.name = "essinf";
            e.eval = [&tree](const Slice& q) {
                detail::require_scalar_terminal(tree, q);
                double m = q[0][0];
                for (const auto& v : q.values) m = std::min(m, v[0]);
                return m;
            };
            break;
        case StaticKind::Mixture: {
            if (!(params.alpha >= 0.0 && params.alpha <= 1.0))
                throw Error(ErrorCode::InvalidParams, "mixture weight must lie in [0, 1]");
            const auto ex = builtin_static(tree, StaticKind::Expectation);
            const auto inf = builtin_static(tree, StaticKind::Essinf);
            e.name = "mixture";
            e.eval = [ex, inf, alpha = params.alpha](const Slice& q) {
                return alpha * ex.eval(q) + (1.0 - alpha) * inf.eval(q);
            };
            break;
        }
        case StaticKind::Entropic: {
            if (!(params.gamma > 0.0) || !std::isfinite(params.gamma))
                throw Error(ErrorCode::InvalidParams, "entropic map needs gamma > 0");
            e.name = "entropic";
            e.eval = [&tree, prob, g = params.gamma](const Slice& q) {
                detail::require_scalar_terminal(tree, q);
                double m = -INFINITY;
                for (const auto& v : q.values) m = std::max(m, -g * v[0]);
                double s = 0.0;
                for (std::size_t d = 0; d < prob.size(); ++d) s += prob[d] * std::exp(-g * q[d][0] - m);
                return -(m + std::log(s)) / g;
            };
            break;
        }
    }
    return e;
}

struct ExtensionStep {
    int time = 0;
    std::size_t index = 0;
    std::string path;
    double target = 0.0;  // E(I_A Q)
    double y = 0.0;       // solution of E(I_A y) = target
    double residual = 0.0;
    int iterations = 0;
};

struct TowerCheck {
    int from_time = 0;  // slice Y_u embedded as terminal
    int time = 0;       // earlier time s
    std::size_t index = 0;
    std::string path;
    double target = 0.0;    // E(I_B Q), what Y_s was solved against
    double achieved = 0.0;  // E(I_B Y_u)
    double y = 0.0;         // Y_s(B)
    double y_resolved = 0.0;  // solution of E(I_B y') = achieved
    bool ok = true;
};

struct ExtensionCertificate {
    enum class Kind { NoSolution, TowerMismatch };
    Kind kind = Kind::NoSolution;
    int time = 0;  // NoSolution: the atom's time; TowerMismatch: the slice used as terminal
    std::size_t index = 0;
    std::string path;
    std::string detail;
    int check_time = -1;  // TowerMismatch: time of the atom (index, path) where the slice disagrees
};

inline const char* to_string(ExtensionCertificate::Kind k) {
    return k == ExtensionCertificate::Kind::NoSolution ? "no-solution" : "tower-mismatch";
}

struct ExtensionResult {
    std::optional<AdaptedProcess> family;
    std::optional<ExtensionCertificate> certificate;
    std::vector<ExtensionStep> steps;   // per-atom solves, latest time first
    std::vector<TowerCheck> towers;

    bool ok() const { return family.has_value(); }
};

struct ExtensionOptions {
    double bracket_offset = 0.0;   // shifts the initial bracket, used to test uniqueness
    double max_expansion = 1048576.0;
    double residual_target = 0.0;  // bisect on bracket width, not on the residual
    double x_tolerance = 1e-12;
    double accept = 1e-9;
    double tower_tolerance = 1e-8;
    std::vector<double> triviality_probe = {-1.0, 0.0, 0.5, 2.0};
};

namespace detail {

/// Solves E(I_A y) = target for the scalar y.
inline ExtensionStep solve_atom(const ScenarioTree& tree, const StaticExpectation& e, Atom a, double target,
                                double qmin, double qmax, const ExtensionOptions& opt, bool& solved) {
    const auto [lo, hi] = tree.descendants(a, tree.horizon());
    const std::size_t n = tree.level_size(tree.horizon());
    auto g = [&, lo = lo, hi = hi](double y) {
        Slice v{tree.horizon(), std::vector<Vector>(n, Vector::Zero(1))};
        for (std::size_t d = lo; d < hi; ++d) v[d][0] = y;
        return e.eval(v) - target;
    };
    root::ScalarOptions ro;
    ro.residual_target = opt.residual_target;
    ro.accept = opt.accept;
    ro.max_expansion = opt.max_expansion;
    ro.x_tolerance = opt.x_tolerance;
    const auto r = root::bracket_and_bisect(g, qmin - 1.0 + opt.bracket_offset, qmax + 1.0 + opt.bracket_offset, ro);
    const std::string where = at_path(tree, a);
    if (r.status == root::Status::NoBracket)
        throw Error(ErrorCode::RootFindDivergence, "no sign change in the expanded bracket" + where);
    if (r.status == root::Status::NonFinite)
        throw Error(ErrorCode::RootFindDivergence, "static map returned a non-finite value" + where);
    solved = r.status == root::Status::Converged;
    return ExtensionStep{a.time, a.index, path_string(tree.path(a)), target, r.x, r.residual, r.iterations};
}

}  // namespace detail

/// Builds Y_t at every atom from E(I_A Q) = E(I_A Y_t), then checks that each slice,
/// used as a terminal variable, reproduces the earlier slices. Either branch of the
/// result is populated; bracket exhaustion throws instead.
inline ExtensionResult extend_static(const ScenarioTree& tree, const StaticExpectation& e, const Slice& q,
                                     const ExtensionOptions& opt = {}) {
    detail::require_scalar_terminal(tree, q);
    for (double c : opt.triviality_probe) {
        const double v = e.eval(constant_slice(tree, tree.horizon(), Vector::Constant(1, c)));
        if (!(std::abs(v - c) <= 1e-10))
            throw Error(ErrorCode::TrivialityProbeFailed,
                        "map sends the constant " + std::to_string(c) + " to " + std::to_string(v));
    }
    const int T = tree.horizon();
    double qmin = q[0][0], qmax = q[0][0];
    for (const auto& v : q.values) {
        qmin = std::min(qmin, v[0]);
        qmax = std::max(qmax, v[0]);
    }

    ExtensionResult res;
    AdaptedProcess fam{1, 0, std::vector<Slice>(static_cast<std::size_t>(T + 1))};
    fam.levels[static_cast<std::size_t>(T)] = q;
    for (int t = T - 1; t >= 0; --t) {
        const std::size_t n = tree.level_size(t);
        std::vector<ExtensionStep> steps(n);
        std::vector<char> solved(n, 0);
        parallel_for(n, [&](std::size_t i) {
            const Atom a{t, i};
            bool ok = false;
            steps[i] = detail::solve_atom(tree, e, a, e.eval(indicator(tree, a, q)), qmin, qmax, opt, ok);
            solved[i] = ok ? 1 : 0;
        });
        Slice level{t, std::vector<Vector>(n)};
        for (std::size_t i = 0; i < n; ++i) {
            level[i] = Vector::Constant(1, steps[i].y);
            res.steps.push_back(steps[i]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!solved[i]) {
                res.certificate = ExtensionCertificate{
                    ExtensionCertificate::Kind::NoSolution, t, i, steps[i].path,
                    "no y solves E(I_A y) = " + std::to_string(steps[i].target) + "; closest residual " +
                        std::to_string(steps[i].residual)};
                return res;
            }
        }
        fam.levels[static_cast<std::size_t>(t)] = std::move(level);
    }

    for (int u = 1; u < T; ++u) {
        const Slice lifted = embed(tree, fam.at(u), T);
        for (int s = 0; s < u; ++s) {
            for (Atom b : tree.atoms_at(s)) {
                TowerCheck tc;
                tc.from_time = u;
                tc.time = s;
                tc.index = b.index;
                tc.path = detail::path_string(tree.path(b));
                tc.target = e.eval(indicator(tree, b, q));
                tc.achieved = e.eval(indicator(tree, b, lifted));
                tc.y = fam.at(b)[0];
                bool solved = false;
                const auto again = detail::solve_atom(tree, e, b, tc.achieved, qmin, qmax, opt, solved);
                tc.y_resolved = again.y;
                tc.ok = solved && std::abs(tc.y_resolved - tc.y) <= opt.tower_tolerance;
                res.towers.push_back(tc);
                if (!tc.ok && !res.certificate) {
                    res.certificate = ExtensionCertificate{
                        ExtensionCertificate::Kind::TowerMismatch, u, b.index, tc.path,
                        "Y_" + std::to_string(u) + " as terminal gives " + std::to_string(tc.achieved) +
                            " where Q gives " + std::to_string(tc.target) + "; re-solved value " +
                            std::to_string(tc.y_resolved) + " vs " + std::to_string(tc.y),
                        s};
                }
            }
        }
    }
    if (!res.certificate) res.family = std::move(fam);
    return res;
}

/// Dynamic family generated by extension; evaluation throws NotTimeConsistent when the
/// static map admits no consistent extension at the given Q.
inline NonlinearExpectation dynamic_from_static(const ScenarioTree& tree, StaticExpectation e,
                                                ExtensionOptions opt = {}) {
    NonlinearExpectation out;
    out.dim = 1;
    out.name = "extension:" + e.name;
    out.evaluate = [&tree, e = std::move(e), opt = std::move(opt)](const Slice& q, int t) {
        tree.check_time(t);
        auto r = extend_static(tree, e, q, opt);
        if (!r.family) throw Error(ErrorCode::NotTimeConsistent, r.certificate->detail);
        return r.family->at(t);
    };
    return out;
}

/// Time-0 restriction of a dynamic expectation as a static map.
inline StaticExpectation static_from_dynamic(const NonlinearExpectation& e) {
    if (e.dim != 1) throw Error(ErrorCode::DimensionMismatch, "static maps are scalar");
    StaticExpectation s;
    s.name = "time0:" + e.name;
    s.eval = [e](const Slice& q) { return e.evaluate(q, 0)[0][0]; };
    return s;
}

}  // namespace bsde
