#pragma once

#include "bsde/solver.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace bsde {

/// Which pair of comparison hypotheses applies at a given time:
/// Standard evaluates the Z-sensitivity at Y^2 and the monotone implication with Z^1,
/// Alternate evaluates it at Y^1 and the implication with Z^2.
enum class ConditionMode { Standard, Alternate };

enum class MarginClass { Strict, Boundary, Violated };

inline const char* to_string(MarginClass c) {
    switch (c) {
        case MarginClass::Strict: return "strict";
        case MarginClass::Boundary: return "boundary";
        case MarginClass::Violated: return "violated";
    }
    return "unknown";
}

inline MarginClass classify(double margin, double tol) {
    if (margin > tol) return MarginClass::Strict;
    if (margin >= -tol) return MarginClass::Boundary;
    return MarginClass::Violated;
}

struct MinGap {
    double value = 0.0;
    std::vector<int> argmin;  // every supported j within 1e-12 of the minimum
};

/// min over supported j of the i-th row of (Z1 - Z2) applied to (e_j - p).
inline MinGap min_gap(const ScenarioTree& tree, Atom a, int i, const GainsMatrix& z1, const GainsMatrix& z2) {
    tree.require_nonterminal(a);
    if (z1.rows() != z2.rows() || z1.cols() != z2.cols() || i < 0 || i >= z1.rows())
        throw Error(ErrorCode::DimensionMismatch, "min_gap: incompatible gains matrices or component");
    const GainsMatrix d = z1.row(i) - z2.row(i);
    const auto inc = increments(tree, a, d);
    MinGap out;
    out.value = std::numeric_limits<double>::infinity();
    for (int j : tree.support(a).indices) out.value = std::min(out.value, inc[static_cast<std::size_t>(j)][0]);
    for (int j : tree.support(a).indices)
        if (inc[static_cast<std::size_t>(j)][0] - out.value <= 1e-12) out.argmin.push_back(j);
    return out;
}

struct ComponentComparison {
    double condition_ii_gap = 0.0;     // F1 - F2 at (Y^2, Z^2)
    double min_gap = 0.0;
    double condition_iii_margin = 0.0; // Z-sensitivity of F1 minus min_gap
    MarginClass iii_class = MarginClass::Boundary;
    bool row_equivalent = false;       // e_i^* Z^1 ~ e_i^* Z^2
    double y_diff = 0.0;               // Y^1 - Y^2
};

struct AtomComparison {
    int time = 0;
    std::size_t index = 0;
    ConditionMode mode = ConditionMode::Standard;
    bool iv_hypothesis = false;  // the monotone implication's premise at realized values
    bool iv_ok = true;           // implication holds at realized values and on the probe
    std::string iv_detail;
    std::vector<ComponentComparison> components;
};

struct TerminalCheck {
    std::size_t index = 0;
    Vector q_diff;  // Q^1 - Q^2
};

struct ComparisonReport {
    std::vector<std::vector<AtomComparison>> levels;  // t = 0 .. T-1
    std::vector<TerminalCheck> terminal;
    BsdeSolution sol1, sol2;
    double tolerance = 1e-10;

    bool condition_i = true;
    bool condition_ii = true;
    bool condition_iii = true;
    bool condition_iv = true;
    bool conclusion = true;         // Y^1 >= Y^2 at every atom and component
    bool strict_premise = true;     // (iii) strict except at row equivalence
    int boundary_margins = 0;

    bool conditions_hold() const { return condition_i && condition_ii && condition_iii && condition_iv; }
    const AtomComparison& at(Atom a) const { return levels[static_cast<std::size_t>(a.time)][a.index]; }
};

struct ComparisonOptions {
    std::vector<ConditionMode> modes;  // per time; empty means Standard everywhere
    double tolerance = 1e-10;
    ProbeConfig probe;
    int vector_probe_samples = 64;
};

namespace detail {

/// Scalar: y -> y - F1(y, z) strictly increasing on a grid spanning the realized values.
/// Vector: random pairs around y2 must not satisfy the premise while failing the conclusion.
inline std::string probe_condition_iv(const ScenarioTree& tree, Atom a, const Driver& f1, const GainsMatrix& z,
                                      const Vector& y1, const Vector& y2, const ComparisonOptions& opt,
                                      std::mt19937_64& rng) {
    const StepContext ctx{&tree, a};
    auto h = [&](const Vector& y) { return Vector(y - f1.eval(ctx, y, z)); };
    if (f1.dim == 1) {
        const double lo = std::min(y1[0], y2[0]) + opt.probe.y_min;
        const double hi = std::max(y1[0], y2[0]) + opt.probe.y_max;
        double prev = h(Vector::Constant(1, lo))[0];
        for (int i = 1; i < opt.probe.y_count; ++i) {
            const double y = lo + (hi - lo) * i / (opt.probe.y_count - 1);
            const double cur = h(Vector::Constant(1, y))[0];
            if (!(cur > prev)) return "y - F1(y, Z) not strictly increasing near y = " + std::to_string(y);
            prev = cur;
        }
        return {};
    }
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Vector h2 = h(y2);
    for (int s = 0; s < opt.vector_probe_samples; ++s) {
        Vector delta(f1.dim);
        for (int i = 0; i < f1.dim; ++i) delta[i] = u(rng);
        const Vector dh = h(y2 + delta) - h2;
        if (dh.minCoeff() >= 0.0 && delta.minCoeff() < 0.0)
            return "premise holds but conclusion fails for a probe displacement";
    }
    return {};
}

}  // namespace detail

/// Solves both equations and evaluates the four comparison hypotheses at every atom,
/// with the conclusion Y^1 >= Y^2 reported alongside.
inline ComparisonReport check_conditions(const ScenarioTree& tree, const Driver& f1, const Driver& f2,
                                         const Slice& q1, const Slice& q2, const ComparisonOptions& opt = {}) {
    if (f1.dim != f2.dim) throw Error(ErrorCode::DimensionMismatch, "drivers differ in dimension");
    ComparisonReport rep;
    rep.tolerance = opt.tolerance;
    rep.sol1 = solve(tree, f1, q1);
    rep.sol2 = solve(tree, f2, q2);
    const double tol = opt.tolerance;
    const int k = f1.dim;
    std::mt19937_64 rng(opt.probe.seed);

    for (Atom a : tree.atoms_at(tree.horizon())) {
        TerminalCheck tc{a.index, q1[a.index] - q2[a.index]};
        if (tc.q_diff.minCoeff() < -tol) rep.condition_i = false;
        if (tc.q_diff.minCoeff() < -tol) rep.conclusion = false;
        rep.terminal.push_back(std::move(tc));
    }

    rep.levels.resize(static_cast<std::size_t>(tree.horizon()));
    for (int t = 0; t < tree.horizon(); ++t) {
        const ConditionMode mode =
            static_cast<std::size_t>(t) < opt.modes.size() ? opt.modes[static_cast<std::size_t>(t)] : ConditionMode::Standard;
        for (Atom a : tree.atoms_at(t)) {
            const Vector& y1 = rep.sol1.y.at(a);
            const Vector& y2 = rep.sol2.y.at(a);
            const GainsMatrix& z1 = rep.sol1.z.at(a);
            const GainsMatrix& z2 = rep.sol2.z.at(a);

            AtomComparison ac;
            ac.time = t;
            ac.index = a.index;
            ac.mode = mode;

            const Vector f1_22 = evaluate(f1, tree, a, y2, z2);
            const Vector f2_22 = evaluate(f2, tree, a, y2, z2);
            const Vector& y_sens = mode == ConditionMode::Standard ? y2 : y1;
            const Vector sens = evaluate(f1, tree, a, y_sens, z1) - evaluate(f1, tree, a, y_sens, z2);

            for (int i = 0; i < k; ++i) {
                ComponentComparison cc;
                cc.condition_ii_gap = f1_22[i] - f2_22[i];
                cc.min_gap = min_gap(tree, a, i, z1, z2).value;
                cc.condition_iii_margin = sens[i] - cc.min_gap;
                cc.iii_class = classify(cc.condition_iii_margin, tol);
                cc.row_equivalent = equivalent_row(tree, a, i, z1, z2);
                cc.y_diff = y1[i] - y2[i];
                if (cc.condition_ii_gap < -tol) rep.condition_ii = false;
                if (cc.iii_class == MarginClass::Violated) rep.condition_iii = false;
                if (cc.iii_class == MarginClass::Boundary) ++rep.boundary_margins;
                if (cc.iii_class != MarginClass::Strict && !cc.row_equivalent) rep.strict_premise = false;
                if (cc.y_diff < -tol) rep.conclusion = false;
                ac.components.push_back(cc);
            }

            // (iv) / (iv'): premise Y^1 - F1(Y^1, Z) >= Y^2 - F1(Y^2, Z) implies Y^1 >= Y^2
            const GainsMatrix& z_iv = mode == ConditionMode::Standard ? z1 : z2;
            const Vector premise = (y1 - evaluate(f1, tree, a, y1, z_iv)) - (y2 - evaluate(f1, tree, a, y2, z_iv));
            ac.iv_hypothesis = premise.minCoeff() >= -tol;
            if (ac.iv_hypothesis && (y1 - y2).minCoeff() < -tol) {
                ac.iv_ok = false;
                ac.iv_detail = "premise holds at the realized values but Y^1 < Y^2 in some component";
            } else {
                ac.iv_detail = detail::probe_condition_iv(tree, a, f1, canonicalize(tree, a, z_iv), y1, y2, opt, rng);
                ac.iv_ok = ac.iv_detail.empty();
            }
            if (!ac.iv_ok) rep.condition_iv = false;
            rep.levels[static_cast<std::size_t>(t)].push_back(std::move(ac));
        }
    }
    return rep;
}

struct StrictnessFinding {
    int time = 0;
    std::size_t index = 0;
    int component = 0;
    std::vector<std::string> violations;  // empty when propagation is confirmed
};

struct StrictnessReport {
    bool premise_strict = true;
    std::vector<StrictnessFinding> equalities;

    bool confirmed() const {
        for (const auto& e : equalities)
            if (!e.violations.empty()) return false;
        return true;
    }
};

/// Where some component of Y^1_t equals Y^2_t, checks that the equality propagates
/// through the subtree: equal terminal values, equal drivers at (Y^2, Z^2),
/// equivalent gains rows and equal Y at every later atom.
inline StrictnessReport strictness_analysis(const ScenarioTree& tree, const ComparisonReport& rep,
                                            const Slice& q1, const Slice& q2) {
    StrictnessReport out;
    out.premise_strict = rep.strict_premise;
    const double tol = rep.tolerance;
    const int k = rep.sol1.y.dim;
    for (int t = 0; t < tree.horizon(); ++t) {
        for (Atom a : tree.atoms_at(t)) {
            for (int i = 0; i < k; ++i) {
                if (std::abs(rep.at(a).components[static_cast<std::size_t>(i)].y_diff) > tol) continue;
                StrictnessFinding f{t, a.index, i, {}};
                const auto [lo, hi] = tree.descendants(a, tree.horizon());
                for (std::size_t d = lo; d < hi; ++d)
                    if (std::abs(q1[d][i] - q2[d][i]) > tol) {
                        f.violations.push_back("terminal values differ at atom " + std::to_string(d));
                        break;
                    }
                for (int s = t; s < tree.horizon(); ++s) {
                    const auto [slo, shi] = tree.descendants(a, s);
                    for (std::size_t d = slo; d < shi; ++d) {
                        const auto& c = rep.levels[static_cast<std::size_t>(s)][d].components[static_cast<std::size_t>(i)];
                        const std::string where = " at t=" + std::to_string(s) + " atom " + std::to_string(d);
                        if (std::abs(c.condition_ii_gap) > tol) f.violations.push_back("drivers differ" + where);
                        if (!c.row_equivalent) f.violations.push_back("gains not equivalent" + where);
                        if (std::abs(c.y_diff) > tol) f.violations.push_back("Y differs" + where);
                    }
                }
                out.equalities.push_back(std::move(f));
            }
        }
    }
    return out;
}

}  // namespace bsde
