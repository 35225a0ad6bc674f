#pragma once

#include "bsde/core.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bsde {

/// Handle to one positive-probability path of X up to `time`. Two atoms of the
/// same tree are equal iff their paths are equal, which is iff (time, index) match,
/// because every level is enumerated once in lexicographic path order.
struct Atom {
    int time = 0;
    std::size_t index = 0;

    friend auto operator<=>(const Atom&, const Atom&) = default;
};

/// Indices of next states reachable with positive probability.
struct SupportSet {
    std::vector<int> indices;

    bool contains(int j) const { return std::binary_search(indices.begin(), indices.end(), j); }
    std::size_t size() const { return indices.size(); }
};

/// Input to build_tree(). Rows in `kernel_rows` override the Markov matrix at the
/// given path; without a Markov matrix every reachable non-terminal path needs a row.
struct TreeSpec {
    int n_states = 0;
    int horizon = 0;
    int initial_state = 0;
    std::optional<std::vector<std::vector<double>>> markov_matrix;
    std::map<std::vector<int>, std::vector<double>> kernel_rows;
};

/// Values of an F_t-measurable random vector: one R^K vector per atom at `time`,
/// in the tree's atom order.
struct Slice {
    int time = 0;
    std::vector<Vector> values;

    int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }
    std::size_t size() const { return values.size(); }
    const Vector& operator[](std::size_t k) const { return values[k]; }
    Vector& operator[](std::size_t k) { return values[k]; }
};

inline Slice operator+(Slice a, const Slice& b) {
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
    return a;
}
inline Slice operator-(Slice a, const Slice& b) {
    for (std::size_t k = 0; k < a.size(); ++k) a[k] -= b[k];
    return a;
}
inline Slice operator*(double s, Slice a) {
    for (auto& v : a.values) v *= s;
    return a;
}
inline Slice operator-(Slice a) { return -1.0 * std::move(a); }

inline double max_abs_diff(const Slice& a, const Slice& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k)
        m = std::max(m, max_abs(a[k] - b[k]));
    return m;
}

/// Finite-state process X with its full path filtration and transition kernel.
/// Immutable after construction; every accessor is safe to call concurrently.
class ScenarioTree {
public:
    int n_states() const { return n_states_; }
    int horizon() const { return horizon_; }
    int initial_state() const { return initial_state_; }

    std::size_t level_size(int t) const {
        check_time(t);
        return levels_[static_cast<std::size_t>(t)].size();
    }

    std::vector<Atom> atoms_at(int t) const {
        std::vector<Atom> out(level_size(t));
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = Atom{t, k};
        return out;
    }

    Atom root() const { return Atom{0, 0}; }

    bool is_terminal(Atom a) const { return a.time == horizon_; }

    std::span<const int> path(Atom a) const { return node(a).path; }
    int state(Atom a) const { return node(a).path.back(); }

    /// Unconditional probability of the atom.
    double probability(Atom a) const { return node(a).probability; }

    /// Kernel row P(X_{t+1} = e_j | atom), as a vector in R^N.
    const Vector& kernel(Atom a) const {
        require_nonterminal(a);
        return node(a).kernel;
    }

    const SupportSet& support(Atom a) const {
        require_nonterminal(a);
        return node(a).support;
    }

    std::optional<Atom> child(Atom a, int j) const {
        require_nonterminal(a);
        if (j < 0 || j >= n_states_) return std::nullopt;
        const auto c = node(a).children[static_cast<std::size_t>(j)];
        if (c < 0) return std::nullopt;
        return Atom{a.time + 1, static_cast<std::size_t>(c)};
    }

    Atom parent(Atom a) const {
        if (a.time == 0) throw Error(ErrorCode::TimeOutOfRange, "root atom has no parent");
        return Atom{a.time - 1, node(a).parent};
    }

    Atom ancestor(Atom a, int s) const {
        if (s < 0 || s > a.time) throw Error(ErrorCode::TimeOutOfRange, "ancestor time out of range");
        while (a.time > s) a = parent(a);
        return a;
    }

    /// Atoms at time u >= a.time that extend a, as a contiguous index range [first, second).
    std::pair<std::size_t, std::size_t> descendants(Atom a, int u) const {
        check_time(u);
        if (u < a.time) throw Error(ErrorCode::TimeOutOfRange, "descendant time precedes atom");
        Atom lo = a, hi = a;
        while (lo.time < u) {
            const auto& s = node(lo).support.indices;
            lo = *child(lo, s.front());
            const auto& sh = node(hi).support.indices;
            hi = *child(hi, sh.back());
        }
        return {lo.index, hi.index + 1};
    }

    bool is_descendant(Atom d, Atom a) const {
        if (d.time < a.time) return false;
        return ancestor(d, a.time) == a;
    }

    std::optional<Atom> find(std::span<const int> p) const {
        if (p.empty() || static_cast<int>(p.size()) > horizon_ + 1) return std::nullopt;
        if (p.front() != initial_state_) return std::nullopt;
        Atom a = root();
        for (std::size_t s = 1; s < p.size(); ++s) {
            auto c = child(a, p[s]);
            if (!c) return std::nullopt;
            a = *c;
        }
        return a;
    }

    void check_time(int t) const {
        if (t < 0 || t > horizon_)
            throw Error(ErrorCode::TimeOutOfRange, "time " + std::to_string(t) + " outside [0," +
                                                       std::to_string(horizon_) + "]");
    }

    void require_nonterminal(Atom a) const {
        if (a.time >= horizon_) throw Error(ErrorCode::TerminalAtom, "atom at terminal time has no kernel");
    }

    friend ScenarioTree build_tree(const TreeSpec& spec, const Tolerances& tol);

private:
    struct Node {
        std::vector<int> path;
        double probability = 1.0;
        std::size_t parent = 0;
        Vector kernel;                      // empty at the horizon
        SupportSet support;
        std::vector<std::ptrdiff_t> children;  // per state, -1 if pruned
    };

    const Node& node(Atom a) const {
        check_time(a.time);
        const auto& level = levels_[static_cast<std::size_t>(a.time)];
        if (a.index >= level.size()) throw Error(ErrorCode::TimeOutOfRange, "atom index out of range");
        return level[a.index];
    }

    int n_states_ = 0;
    int horizon_ = 0;
    int initial_state_ = 0;
    std::vector<std::vector<Node>> levels_;
};

namespace detail {

inline std::string path_string(std::span<const int> p) {
    std::string s = "(";
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(p[i]);
    }
    return s + ")";
}

inline Vector validate_row(const std::vector<double>& row, int n, const Tolerances& tol,
                           const std::string& where) {
    if (static_cast<int>(row.size()) != n)
        throw Error(ErrorCode::InvalidTree, "row at " + where + " has " + std::to_string(row.size()) +
                                                " entries, expected " + std::to_string(n));
    double sum = 0.0;
    for (double x : row) {
        if (!std::isfinite(x)) throw Error(ErrorCode::InvalidTree, "non-finite probability at " + where);
        if (x < -tol.zero_probability) throw Error(ErrorCode::NegativeProbability, "negative entry at " + where);
        sum += x;
    }
    // small slack so a sum exactly at the tolerance survives rounding in the addition
    if (std::abs(sum - 1.0) > tol.row_sum * (1.0 + 1e-6)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.12g", sum);
        throw Error(ErrorCode::RowSumOutOfTolerance, "row at " + where + " sums to " + buf);
    }
    Vector p(n);
    for (int j = 0; j < n; ++j) p[j] = row[static_cast<std::size_t>(j)] < tol.zero_probability ? 0.0 : row[static_cast<std::size_t>(j)];
    return p / p.sum();
}

}  // namespace detail

/// Validates the specification and enumerates all positive-probability atoms.
inline ScenarioTree build_tree(const TreeSpec& spec, const Tolerances& tol = default_tolerances()) {
    if (spec.horizon <= 0) throw Error(ErrorCode::HorizonZero, "horizon must be positive");
    if (spec.n_states <= 0) throw Error(ErrorCode::InvalidTree, "n_states must be positive");
    if (spec.initial_state < 0 || spec.initial_state >= spec.n_states)
        throw Error(ErrorCode::InvalidTree, "initial_state out of range");

    const int n = spec.n_states;
    std::vector<Vector> markov;
    if (spec.markov_matrix) {
        if (static_cast<int>(spec.markov_matrix->size()) != n)
            throw Error(ErrorCode::InvalidTree, "markov_matrix must have n_states rows");
        for (int i = 0; i < n; ++i)
            markov.push_back(detail::validate_row((*spec.markov_matrix)[static_cast<std::size_t>(i)], n, tol,
                                                  "markov_matrix row " + std::to_string(i)));
    }
    for (const auto& [p, row] : spec.kernel_rows) {
        if (p.empty() || p.front() != spec.initial_state || static_cast<int>(p.size()) > spec.horizon)
            throw Error(ErrorCode::InvalidTree, "kernel row path " + detail::path_string(p) + " is not a non-terminal path");
        for (int s : p)
            if (s < 0 || s >= n) throw Error(ErrorCode::InvalidTree, "kernel row path has state out of range");
    }

    ScenarioTree tree;
    tree.n_states_ = n;
    tree.horizon_ = spec.horizon;
    tree.initial_state_ = spec.initial_state;
    tree.levels_.resize(static_cast<std::size_t>(spec.horizon) + 1);

    ScenarioTree::Node root;
    root.path = {spec.initial_state};
    tree.levels_[0].push_back(std::move(root));

    for (int t = 0; t < spec.horizon; ++t) {
        auto& level = tree.levels_[static_cast<std::size_t>(t)];
        auto& next = tree.levels_[static_cast<std::size_t>(t) + 1];
        for (std::size_t k = 0; k < level.size(); ++k) {
            auto& nd = level[k];
            if (auto it = spec.kernel_rows.find(nd.path); it != spec.kernel_rows.end()) {
                nd.kernel = detail::validate_row(it->second, n, tol, "path " + detail::path_string(nd.path));
            } else if (!markov.empty()) {
                nd.kernel = markov[static_cast<std::size_t>(nd.path.back())];
            } else {
                throw Error(ErrorCode::MissingKernelRow, "no kernel row for path " + detail::path_string(nd.path));
            }
            nd.children.assign(static_cast<std::size_t>(n), -1);
            for (int j = 0; j < n; ++j) {
                if (nd.kernel[j] <= 0.0) continue;
                nd.support.indices.push_back(j);
                ScenarioTree::Node c;
                c.path = nd.path;
                c.path.push_back(j);
                c.probability = nd.probability * nd.kernel[j];
                c.parent = k;
                nd.children[static_cast<std::size_t>(j)] = static_cast<std::ptrdiff_t>(next.size());
                next.push_back(std::move(c));
            }
        }
    }
    return tree;
}

inline std::vector<Atom> atoms_at(const ScenarioTree& tree, int t) { return tree.atoms_at(t); }

inline const SupportSet& support(const ScenarioTree& tree, Atom a) { return tree.support(a); }

/// Values of a time-(t+1) slice on the children of `a`, indexed by next state.
/// Entries for states outside the support are empty vectors.
inline std::vector<Vector> child_values(const ScenarioTree& tree, const Slice& next, Atom a) {
    if (next.time != a.time + 1 || next.size() != tree.level_size(a.time + 1))
        throw Error(ErrorCode::MissingChildValue, "slice does not cover the children of the atom");
    std::vector<Vector> out(static_cast<std::size_t>(tree.n_states()));
    for (int j : tree.support(a).indices) out[static_cast<std::size_t>(j)] = next[tree.child(a, j)->index];
    return out;
}

/// E[V | atom] where V lives on the children of the atom (indexed by state).
inline Vector cond_expect(const ScenarioTree& tree, const std::vector<Vector>& by_state, Atom a) {
    const auto& p = tree.kernel(a);
    const auto& sup = tree.support(a).indices;
    if (by_state.size() != static_cast<std::size_t>(tree.n_states()))
        throw Error(ErrorCode::MissingChildValue, "child values must be indexed by state");
    const auto k = by_state[static_cast<std::size_t>(sup.front())].size();
    Vector acc = Vector::Zero(k);
    for (int j : sup) {
        const auto& v = by_state[static_cast<std::size_t>(j)];
        if (v.size() == 0 || v.size() != k)
            throw Error(ErrorCode::MissingChildValue, "missing value for child state " + std::to_string(j));
        acc += p[j] * v;
    }
    return acc;
}

inline Vector cond_expect(const ScenarioTree& tree, const Slice& next, Atom a) {
    return cond_expect(tree, child_values(tree, next, a), a);
}

/// E[V | F_t] for every atom at t = next.time - 1.
inline Slice cond_expect(const ScenarioTree& tree, const Slice& next) {
    if (next.time <= 0) throw Error(ErrorCode::TimeOutOfRange, "no earlier time to condition on");
    Slice out{next.time - 1, {}};
    for (Atom a : tree.atoms_at(next.time - 1)) out.values.push_back(cond_expect(tree, next, a));
    return out;
}

/// M_{t+1} on the outcome X_{t+1} = e_j: e_j - E[X_{t+1} | atom].
inline Vector martingale_difference(const ScenarioTree& tree, Atom a, int j) {
    if (!tree.support(a).contains(j))
        throw Error(ErrorCode::OffSupportIndex, "state " + std::to_string(j) + " not in support");
    Vector m = -tree.kernel(a);
    m[j] += 1.0;
    return m;
}

inline Slice constant_slice(const ScenarioTree& tree, int t, const Vector& value) {
    return Slice{t, std::vector<Vector>(tree.level_size(t), value)};
}

/// Lifts an F_t-measurable slice to time u >= t (each atom takes its ancestor's value).
inline Slice embed(const ScenarioTree& tree, const Slice& s, int u) {
    tree.check_time(u);
    if (u < s.time) throw Error(ErrorCode::TimeOutOfRange, "cannot embed into an earlier time");
    Slice out{u, {}};
    out.values.reserve(tree.level_size(u));
    for (Atom d : tree.atoms_at(u)) out.values.push_back(s[tree.ancestor(d, s.time).index]);
    return out;
}

/// I_A V for V at time >= A.time: zero outside the subtree rooted at A.
inline Slice indicator(const ScenarioTree& tree, Atom a, const Slice& v) {
    Slice out = v;
    const auto [lo, hi] = tree.descendants(a, v.time);
    for (std::size_t k = 0; k < out.size(); ++k)
        if (k < lo || k >= hi) out[k].setZero();
    return out;
}

/// Y_t as a process over a contiguous time range [first_time, first_time + levels.size()).
struct AdaptedProcess {
    int dim = 0;
    int first_time = 0;
    std::vector<Slice> levels;

    int last_time() const { return first_time + static_cast<int>(levels.size()) - 1; }
    bool covers(int t) const { return t >= first_time && t <= last_time(); }
    const Slice& at(int t) const {
        if (!covers(t)) throw Error(ErrorCode::TimeOutOfRange, "process not defined at time " + std::to_string(t));
        return levels[static_cast<std::size_t>(t - first_time)];
    }
    Slice& at(int t) {
        if (!covers(t)) throw Error(ErrorCode::TimeOutOfRange, "process not defined at time " + std::to_string(t));
        return levels[static_cast<std::size_t>(t - first_time)];
    }
    const Vector& at(Atom a) const { return at(a.time)[a.index]; }
};

}  // namespace bsde
