#pragma once

#include "bsde/comparison.hpp"
#include "bsde/recovery.hpp"

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace bsde {

enum class Provenance { DriverBacked, External };

/// E(Q | F_t) for terminal Q; evaluate returns a slice at time t.
struct NonlinearExpectation {
    int dim = 1;
    std::string name;
    Provenance provenance = Provenance::External;
    std::optional<Driver> driver;
    std::function<Slice(const Slice& q, int t)> evaluate;
};

inline Slice risk_measure(const NonlinearExpectation& e, const Slice& q, int t) { return -e.evaluate(q, t); }

/// Classical conditional expectation by repeated one-step averaging.
inline NonlinearExpectation conditional_expectation(const ScenarioTree& tree, int dim = 1) {
    NonlinearExpectation e;
    e.dim = dim;
    e.name = "conditional_expectation";
    e.evaluate = [&tree](const Slice& q, int t) {
        tree.check_time(t);
        if (q.time != tree.horizon()) throw Error(ErrorCode::TimeOutOfRange, "expectation input must be terminal");
        Slice cur = q;
        while (cur.time > t) cur = cond_expect(tree, cur);
        return cur;
    };
    return e;
}

struct BalancedEntry {
    std::size_t pair_first = 0, pair_second = 0;
    int time = 0;
    std::size_t index = 0;
    int component = 0;
    double margin = 0.0;
    MarginClass margin_class = MarginClass::Boundary;
    bool row_equivalent = false;
    bool strict_ok = true;  // strict, or boundary exactly at row equivalence
};

struct BalancedReport {
    std::vector<BalancedEntry> entries;
    std::vector<std::string> iv_findings;
    int pairs = 0;

    int strictness_violations() const {
        int n = 0;
        for (const auto& e : entries) n += e.strict_ok ? 0 : 1;
        return n;
    }
    bool balanced() const { return strictness_violations() == 0 && iv_findings.empty(); }
};

/// For every ordered pair of distinct terminal conditions, solves both and classifies the
/// Z-sensitivity margin of the driver against itself, plus the monotone-implication probe.
inline BalancedReport check_balanced(const ScenarioTree& tree, const Driver& driver, const std::vector<Slice>& family,
                                     const ComparisonOptions& opt = {}) {
    BalancedReport rep;
    for (std::size_t p = 0; p < family.size(); ++p) {
        for (std::size_t q = 0; q < family.size(); ++q) {
            if (p == q) continue;
            ++rep.pairs;
            const auto cmp = check_conditions(tree, driver, driver, family[p], family[q], opt);
            for (const auto& level : cmp.levels) {
                for (const auto& ac : level) {
                    for (std::size_t i = 0; i < ac.components.size(); ++i) {
                        const auto& c = ac.components[i];
                        BalancedEntry e{p, q, ac.time, ac.index, static_cast<int>(i), c.condition_iii_margin,
                                        c.iii_class, c.row_equivalent, true};
                        e.strict_ok = c.iii_class == MarginClass::Strict ||
                                      (c.iii_class == MarginClass::Boundary && c.row_equivalent);
                        rep.entries.push_back(e);
                    }
                    if (!ac.iv_ok)
                        rep.iv_findings.push_back("pair (" + std::to_string(p) + "," + std::to_string(q) + ") t=" +
                                                  std::to_string(ac.time) + " atom " + std::to_string(ac.index) +
                                                  ": " + ac.iv_detail);
                }
            }
        }
    }
    return rep;
}

/// Driver-backed expectation. The driver's flags are verified on probes and balancedness
/// is probed on the supplied family; a finite probe cannot certify it in general.
inline NonlinearExpectation expectation_from_driver(const ScenarioTree& tree, const Driver& driver,
                                                    const std::vector<Slice>& family, const ProbeConfig& probe = {}) {
    if (!driver.y_independent) throw Error(ErrorCode::DriverDependsOnY, "driver '" + driver.name + "' is not declared y-independent");
    if (!driver.normalized) throw Error(ErrorCode::DriverNotNormalized, "driver '" + driver.name + "' is not declared normalized");
    const auto probed = check_driver_assumptions(tree, driver, probe);
    if (probed.has("y_independent")) throw Error(ErrorCode::DriverDependsOnY, "driver '" + driver.name + "' varies in y");
    if (probed.has("normalized")) throw Error(ErrorCode::DriverNotNormalized, "driver '" + driver.name + "' has F(y, 0) != 0");
    ComparisonOptions opt;
    opt.probe = probe;
    const auto bal = check_balanced(tree, driver, family, opt);
    if (!bal.balanced())
        throw Error(ErrorCode::BalancednessProbeFailed,
                    "driver '" + driver.name + "': " + std::to_string(bal.strictness_violations()) +
                        " non-strict margins, " + std::to_string(bal.iv_findings.size()) + " implication findings");
    NonlinearExpectation e;
    e.dim = driver.dim;
    e.name = "driver:" + driver.name;
    e.provenance = Provenance::DriverBacked;
    e.driver = driver;
    e.evaluate = [&tree, d = driver](const Slice& q, int t) {
        if (q.time != tree.horizon()) throw Error(ErrorCode::TimeOutOfRange, "expectation input must be terminal");
        return solve(tree, d, q, t).y.at(t);
    };
    return e;
}

/// Terminal variable equal to Z (e_j - p) on the subtree of the child reached by j, zero elsewhere.
inline Slice increment_terminal(const ScenarioTree& tree, Atom a, const GainsMatrix& z) {
    const Slice next = shifted_increment_slice(tree, a, Vector::Zero(z.rows()), z);
    Slice out = constant_slice(tree, tree.horizon(), Vector::Zero(z.rows()));
    for (int j : tree.support(a).indices) {
        const Atom c = *tree.child(a, j);
        const auto [lo, hi] = tree.descendants(c, tree.horizon());
        for (std::size_t d = lo; d < hi; ++d) out[d] = next[c.index];
    }
    return out;
}

/// F(t, Z) = E(Z M_{t+1} | F_t) read at the atom.
inline Vector driver_from_expectation(const ScenarioTree& tree, const NonlinearExpectation& e, Atom a,
                                      const GainsMatrix& z) {
    tree.require_nonterminal(a);
    return e.evaluate(increment_terminal(tree, a, canonicalize(tree, a, z)), a.time)[a.index];
}

inline Driver driver_from_expectation(const NonlinearExpectation& e) {
    Driver d;
    d.dim = e.dim;
    d.name = "from_expectation:" + e.name;
    d.y_independent = true;
    d.normalized = true;
    d.eval = [e](const StepContext& ctx, const Vector&, const GainsMatrix& z) {
        return driver_from_expectation(*ctx.tree, e, ctx.atom, z);
    };
    return d;
}

struct PropertyResult {
    std::string name;
    int checks = 0;
    int failures = 0;
    std::string first_failure;
};

struct AxiomReport {
    std::vector<PropertyResult> properties;
    bool all_pass() const {
        for (const auto& p : properties)
            if (p.failures) return false;
        return true;
    }
    const PropertyResult* find(const std::string& name) const {
        for (const auto& p : properties)
            if (p.name == name) return &p;
        return nullptr;
    }
};

struct AxiomOptions {
    double tolerance = 1e-8;
    std::uint64_t seed = 99;
};

/// Checks monotonicity (with the strictness clause), triviality on F_t-measurable inputs,
/// recursivity, I_A locality and translation invariance on the probe pairs.
inline AxiomReport verify_axioms(const ScenarioTree& tree, const NonlinearExpectation& e,
                                 const std::vector<std::pair<Slice, Slice>>& pairs, const AxiomOptions& opt = {}) {
    const double tol = opt.tolerance;
    const int T = tree.horizon();
    const int k = e.dim;
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);

    PropertyResult mono{"monotonicity", 0, 0, {}}, triv{"triviality", 0, 0, {}}, rec{"recursivity", 0, 0, {}},
        loc{"locality", 0, 0, {}}, trans{"translation", 0, 0, {}};
    auto check = [&](PropertyResult& r, bool ok, const std::string& what) {
        ++r.checks;
        if (!ok && r.failures++ == 0) r.first_failure = what;
    };
    auto where = [](int t, std::size_t i) { return " at t=" + std::to_string(t) + " atom " + std::to_string(i); };

    std::vector<Slice> qs;
    for (const auto& [a, b] : pairs) {
        qs.push_back(a);
        qs.push_back(b);
    }

    // cache E(Q | F_t) for every probe and time
    std::vector<std::vector<Slice>> ev(qs.size());
    for (std::size_t n = 0; n < qs.size(); ++n)
        for (int t = 0; t <= T; ++t) ev[n].push_back(e.evaluate(qs[n], t));

    for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
        std::size_t hi_i = 2 * pi, lo_i = 2 * pi + 1;
        auto dominates = [&](const Slice& x, const Slice& y) {
            for (std::size_t d = 0; d < x.size(); ++d)
                if ((x[d] - y[d]).minCoeff() < -tol) return false;
            return true;
        };
        if (!dominates(qs[hi_i], qs[lo_i])) {
            if (!dominates(qs[lo_i], qs[hi_i])) continue;
            std::swap(hi_i, lo_i);
        }
        for (int t = 0; t <= T; ++t) {
            for (Atom a : tree.atoms_at(t)) {
                const Vector diff = ev[hi_i][static_cast<std::size_t>(t)][a.index] - ev[lo_i][static_cast<std::size_t>(t)][a.index];
                check(mono, diff.minCoeff() >= -tol, "E(Q) < E(Q')" + where(t, a.index));
                const auto [lo, hi] = tree.descendants(a, T);
                for (int i = 0; i < k; ++i) {
                    if (std::abs(diff[i]) > tol) continue;
                    bool same = true;
                    for (std::size_t d = lo; d < hi; ++d)
                        same = same && std::abs(qs[hi_i][d][i] - qs[lo_i][d][i]) <= tol;
                    check(mono, same, "equality without subtree equality" + where(t, a.index));
                }
            }
        }
    }

    for (std::size_t n = 0; n < qs.size(); ++n) {
        for (int t = 0; t <= T; ++t) {
            const Slice& et = ev[n][static_cast<std::size_t>(t)];
            const Slice lifted = embed(tree, et, T);
            // F_t-measurable input returned unchanged at t and later times
            for (int s = t; s <= T; ++s) {
                const Slice got = e.evaluate(lifted, s);
                check(triv, max_abs_diff(got, embed(tree, et, s)) <= tol, "E(q | F_s) != q" + where(s, 0));
            }
            for (int s = 0; s < t; ++s)
                check(rec, max_abs_diff(e.evaluate(lifted, s), ev[n][static_cast<std::size_t>(s)]) <= tol,
                      "E(E(Q|F_t)|F_s) != E(Q|F_s) for t=" + std::to_string(t) + " s=" + std::to_string(s));
            for (Atom a : tree.atoms_at(t)) {
                const Slice got = e.evaluate(indicator(tree, a, qs[n]), t);
                bool ok = true;
                for (Atom b : tree.atoms_at(t)) {
                    const Vector want = b.index == a.index ? et[b.index] : Vector(Vector::Zero(k));
                    ok = ok && max_abs(got[b.index] - want) <= tol;
                }
                check(loc, ok, "E(I_A Q | F_t) != I_A E(Q | F_t)" + where(t, a.index));
            }
            Slice shift{t, std::vector<Vector>(tree.level_size(t))};
            for (auto& v : shift.values) {
                v.resize(k);
                for (int i = 0; i < k; ++i) v[i] = unif(rng);
            }
            const Slice got = e.evaluate(qs[n] + embed(tree, shift, T), t);
            check(trans, max_abs_diff(got, et + shift) <= tol, "E(Q + q | F_t) != E(Q | F_t) + q at t=" + std::to_string(t));
        }
    }

    AxiomReport rep;
    rep.properties = {mono, triv, rec, loc, trans};
    return rep;
}

}  // namespace bsde
