#pragma once

#include "bsde/lattice.hpp"

#include <cmath>
#include <vector>

namespace bsde {

/// K x N matrix attached to a non-terminal atom. Canonical form: off-support
/// columns are zero and every row is orthogonal to the kernel row p, so that
/// column j is exactly the realized increment Z (e_j - p).
using GainsMatrix = Matrix;

/// Z_t for t in [first_time, first_time + levels.size()), one matrix per atom.
struct GainsProcess {
    int first_time = 0;
    std::vector<std::vector<GainsMatrix>> levels;

    int last_time() const { return first_time + static_cast<int>(levels.size()) - 1; }
    bool covers(int t) const { return t >= first_time && t <= last_time(); }
    const std::vector<GainsMatrix>& at(int t) const {
        if (!covers(t)) throw Error(ErrorCode::TimeOutOfRange, "gains not defined at time " + std::to_string(t));
        return levels[static_cast<std::size_t>(t - first_time)];
    }
    std::vector<GainsMatrix>& at(int t) {
        if (!covers(t)) throw Error(ErrorCode::TimeOutOfRange, "gains not defined at time " + std::to_string(t));
        return levels[static_cast<std::size_t>(t - first_time)];
    }
    const GainsMatrix& at(Atom a) const { return at(a.time)[a.index]; }
};

inline void check_gains_shape(const ScenarioTree& tree, const GainsMatrix& z) {
    if (z.cols() != tree.n_states())
        throw Error(ErrorCode::DimensionMismatch, "gains matrix must have n_states columns");
}

/// Column j becomes Z (e_j - p) on the support, zero elsewhere. Idempotent.
inline GainsMatrix canonicalize(const ScenarioTree& tree, Atom a, const GainsMatrix& z) {
    check_gains_shape(tree, z);
    const Vector zp = z * tree.kernel(a);
    GainsMatrix out = GainsMatrix::Zero(z.rows(), z.cols());
    for (int j : tree.support(a).indices) out.col(j) = z.col(j) - zp;
    return out;
}

/// Z M_{t+1} on each supported outcome, indexed by next state (empty off-support).
inline std::vector<Vector> increments(const ScenarioTree& tree, Atom a, const GainsMatrix& z) {
    check_gains_shape(tree, z);
    const Vector zp = z * tree.kernel(a);
    std::vector<Vector> out(static_cast<std::size_t>(tree.n_states()));
    for (int j : tree.support(a).indices) out[static_cast<std::size_t>(j)] = z.col(j) - zp;
    return out;
}

/// Martingale representation of a conditionally mean-zero W on the children of `a`.
inline GainsMatrix represent(const ScenarioTree& tree, Atom a, const std::vector<Vector>& w_by_state,
                             const Tolerances& tol = default_tolerances()) {
    const Vector mean = cond_expect(tree, w_by_state, a);
    if (max_abs(mean) > tol.mean_zero)
        throw Error(ErrorCode::NonzeroConditionalMean, "conditional mean " + std::to_string(max_abs(mean)));
    GainsMatrix raw = GainsMatrix::Zero(mean.size(), tree.n_states());
    for (int j : tree.support(a).indices) raw.col(j) = w_by_state[static_cast<std::size_t>(j)];
    return canonicalize(tree, a, raw);
}

/// Z with Z M_{t+1} = V - E[V | atom] on the children of `a`; V need not be centered.
inline GainsMatrix represent_centered(const ScenarioTree& tree, Atom a, std::vector<Vector> v_by_state) {
    const Vector mean = cond_expect(tree, v_by_state, a);
    for (int j : tree.support(a).indices) v_by_state[static_cast<std::size_t>(j)] -= mean;
    GainsMatrix raw = GainsMatrix::Zero(mean.size(), tree.n_states());
    for (int j : tree.support(a).indices) raw.col(j) = v_by_state[static_cast<std::size_t>(j)];
    return canonicalize(tree, a, raw);
}

/// Z1 ~ Z2 at the atom: equal realized increments on every supported outcome.
inline bool equivalent(const ScenarioTree& tree, Atom a, const GainsMatrix& z1, const GainsMatrix& z2,
                       const Tolerances& tol = default_tolerances()) {
    if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
        throw Error(ErrorCode::DimensionMismatch, "gains matrices differ in shape");
    const GainsMatrix d = z1 - z2;
    for (const auto& inc : increments(tree, a, d))
        if (inc.size() && max_abs(inc) > tol.equivalence) return false;
    return true;
}

/// Row-wise version: e_i^* Z1 ~ e_i^* Z2.
inline bool equivalent_row(const ScenarioTree& tree, Atom a, int i, const GainsMatrix& z1, const GainsMatrix& z2,
                           const Tolerances& tol = default_tolerances()) {
    if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
        throw Error(ErrorCode::DimensionMismatch, "gains matrices differ in shape");
    const GainsMatrix d = z1.row(i) - z2.row(i);
    for (const auto& inc : increments(tree, a, d))
        if (inc.size() && std::abs(inc[0]) > tol.equivalence) return false;
    return true;
}

/// ||Z||_M: square root of sum over t, atoms and outcomes of P(atom) p_j |Z (e_j - p)|^2.
inline double seminorm(const ScenarioTree& tree, const GainsProcess& z) {
    double acc = 0.0;
    for (int t = z.first_time; t <= z.last_time(); ++t) {
        const auto& level = z.at(t);
        if (level.size() != tree.level_size(t))
            throw Error(ErrorCode::DimensionMismatch, "gains process does not cover every atom at time " + std::to_string(t));
        for (Atom a : tree.atoms_at(t)) {
            const auto& p = tree.kernel(a);
            const auto inc = increments(tree, a, level[a.index]);
            double local = 0.0;
            for (int j : tree.support(a).indices) local += p[j] * inc[static_cast<std::size_t>(j)].squaredNorm();
            acc += tree.probability(a) * local;
        }
    }
    return std::sqrt(acc);
}

/// Running sums sum_{u<t} Z_u M_{u+1} along every path, for t from first_time to last_time + 1.
inline AdaptedProcess cumulative_gains(const ScenarioTree& tree, const GainsProcess& z) {
    const int k = z.levels.empty() || z.levels.front().empty() ? 0 : static_cast<int>(z.levels.front().front().rows());
    AdaptedProcess out{k, z.first_time, {}};
    out.levels.push_back(constant_slice(tree, z.first_time, Vector::Zero(k)));
    for (int t = z.first_time; t <= z.last_time(); ++t) {
        Slice next{t + 1, std::vector<Vector>(tree.level_size(t + 1))};
        const Slice& cur = out.levels.back();
        for (Atom a : tree.atoms_at(t)) {
            const auto inc = increments(tree, a, z.at(t)[a.index]);
            for (int j : tree.support(a).indices)
                next[tree.child(a, j)->index] = cur[a.index] + inc[static_cast<std::size_t>(j)];
        }
        out.levels.push_back(std::move(next));
    }
    return out;
}

}  // namespace bsde
