#include "oracles.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace bsde;
using namespace testing_support;

namespace {

ScenarioTree one_step(std::vector<double> row) {
    TreeSpec s;
    s.n_states = static_cast<int>(row.size());
    s.horizon = 1;
    s.kernel_rows[{0}] = std::move(row);
    return build_tree(s);
}

GainsMatrix row(std::initializer_list<double> v) {
    GainsMatrix z(1, static_cast<Eigen::Index>(v.size()));
    Eigen::Index j = 0;
    for (double x : v) z(0, j++) = x;
    return z;
}

std::vector<Vector> by_state(std::initializer_list<double> v) {
    std::vector<Vector> out;
    for (double x : v) out.push_back(Vector::Constant(1, x));
    return out;
}

}  // namespace

TEST(Representation, ZeroIncrementGivesZeroMatrix) {
    const auto tree = one_step({0.5, 0.5});
    EXPECT_EQ(represent(tree, tree.root(), by_state({0.0, 0.0})).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Representation, TwoStateExample) {
    const auto tree = one_step({0.5, 0.5});
    const GainsMatrix z = represent(tree, tree.root(), by_state({1.0, -1.0}));
    EXPECT_TRUE(z.isApprox(row({1.0, -1.0})));
    const auto inc = increments(tree, tree.root(), z);
    EXPECT_NEAR(inc[0][0], 1.0, 1e-15);
    EXPECT_NEAR(inc[1][0], -1.0, 1e-15);
}

TEST(Representation, PrunedStateExample) {
    const auto tree = one_step({0.2, 0.0, 0.8});
    std::vector<Vector> w = by_state({4.0, 0.0, -1.0});
    w[1].resize(0);  // off-support: no value
    const GainsMatrix z = represent(tree, tree.root(), w);
    EXPECT_NEAR(z(0, 0), 4.0, 1e-12);
    EXPECT_EQ(z(0, 1), 0.0);
    EXPECT_NEAR(z(0, 2), -1.0, 1e-12);
    // outcomes recomputed by hand: Z p = 0.8 - 0.8, Z (e_0 - p) = 4, Z (e_2 - p) = -1
    const double zp = 4.0 * 0.2 + 0.0 * 0.0 + (-1.0) * 0.8;
    EXPECT_NEAR(zp, 0.0, 1e-15);
    EXPECT_NEAR(z(0, 0) - zp, 4.0, 1e-12);
    EXPECT_NEAR(z(0, 2) - zp, -1.0, 1e-12);
}

TEST(Representation, RejectsNonzeroMean) {
    const auto tree = one_step({0.5, 0.5});
    try {
        represent(tree, tree.root(), by_state({1.0, 0.0}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonzeroConditionalMean);
    }
}

TEST(Representation, EquivalenceExamples) {
    const auto tree = one_step({0.5, 0.5});
    const Atom a = tree.root();
    EXPECT_TRUE(equivalent(tree, a, row({1.0, -1.0}), row({1.0, -1.0})));
    EXPECT_TRUE(equivalent(tree, a, row({1.0, -1.0}), row({2.0, 0.0})));
    EXPECT_FALSE(equivalent(tree, a, row({1.0, -1.0}), row({2.0, -1.0})));

    const auto pruned = one_step({0.2, 0.0, 0.8});
    EXPECT_TRUE(equivalent(pruned, pruned.root(), row({4.0, 0.0, -1.0}), row({4.0, 17.0, -1.0})));
}

TEST(Representation, CanonicalizeExamples) {
    const auto tree = one_step({0.5, 0.5});
    const Atom a = tree.root();
    EXPECT_TRUE(canonicalize(tree, a, row({2.0, 0.0})).isApprox(row({1.0, -1.0})));
    EXPECT_TRUE(canonicalize(tree, a, row({1.0, -1.0})).isApprox(row({1.0, -1.0})));
}

TEST(Representation, SeminormExample) {
    const auto tree = one_step({0.5, 0.5});
    GainsProcess z{0, {{row({1.0, -1.0})}}};
    // 0.5 * 1^2 + 0.5 * (-1)^2
    EXPECT_NEAR(seminorm(tree, z), 1.0, 1e-12);
    GainsProcess zero{0, {{row({0.0, 0.0})}}};
    EXPECT_EQ(seminorm(tree, zero), 0.0);
}

TEST(RepresentationProperty, ExactOnRandomTrees) {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 50; ++rep) {
        const auto rt = random_tree(rng, 4, 3);
        const auto& tree = rt.tree;
        const int k = 1 + rep % 3;
        for (int t = 0; t < tree.horizon(); ++t) {
            for (Atom a : tree.atoms_at(t)) {
                auto w = child_values(tree, random_slice(rng, tree, t + 1, k), a);
                const Vector m = cond_expect(tree, w, a);
                for (int j : tree.support(a).indices) w[static_cast<std::size_t>(j)] -= m;
                const GainsMatrix z = represent(tree, a, w);
                for (int j : tree.support(a).indices)
                    EXPECT_LE(max_abs(z * martingale_difference(tree, a, j) - w[static_cast<std::size_t>(j)]), 1e-10);
                EXPECT_LE(max_abs(z * tree.kernel(a)), 1e-12);
                for (int j = 0; j < tree.n_states(); ++j)
                    if (!tree.support(a).contains(j)) {
                        EXPECT_EQ(z.col(j).cwiseAbs().maxCoeff(), 0.0);
                    }
            }
        }
    }
}

TEST(RepresentationProperty, CanonicalFormIdempotentAndEquivalent) {
    std::mt19937_64 rng(22);
    for (int rep = 0; rep < 40; ++rep) {
        const auto rt = random_tree(rng, 4, 2);
        const Atom a = rt.tree.root();
        const GainsMatrix z = random_gains(rng, 2, rt.tree.n_states());
        const GainsMatrix c = canonicalize(rt.tree, a, z);
        EXPECT_TRUE(equivalent(rt.tree, a, z, c));
        EXPECT_LE((canonicalize(rt.tree, a, c) - c).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(RepresentationProperty, EquivalenceIsAnEquivalenceRelation) {
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 40; ++rep) {
        const auto rt = random_tree(rng, 3, 1);
        const Atom a = rt.tree.root();
        const int n = rt.tree.n_states();
        const GainsMatrix z1 = random_gains(rng, 1, n);
        // z2 and z3 differ from z1 by a constant shift (and off-support junk) or not at all
        GainsMatrix z2 = z1.array() + 0.7;
        GainsMatrix z3 = rep % 2 ? GainsMatrix(z2.array() - 1.3) : random_gains(rng, 1, n);
        for (int j = 0; j < n; ++j)
            if (!rt.tree.support(a).contains(j)) z2(0, j) += 5.0;
        EXPECT_TRUE(equivalent(rt.tree, a, z1, z1));
        EXPECT_EQ(equivalent(rt.tree, a, z1, z2), equivalent(rt.tree, a, z2, z1));
        if (equivalent(rt.tree, a, z1, z2) && equivalent(rt.tree, a, z2, z3)) {
            EXPECT_TRUE(equivalent(rt.tree, a, z1, z3));
        }
        EXPECT_TRUE(equivalent(rt.tree, a, z1, z2));
    }
}

TEST(RepresentationProperty, SeminormZeroIffEquivalentIffSamePathSums) {
    std::mt19937_64 rng(24);
    for (int rep = 0; rep < 20; ++rep) {
        const auto rt = random_tree(rng, 3, 3);
        const auto& tree = rt.tree;
        GainsProcess z1{0, {}}, z2{0, {}};
        const bool same = rep % 2 == 0;
        for (int t = 0; t < tree.horizon(); ++t) {
            std::vector<GainsMatrix> l1, l2;
            for (Atom a : tree.atoms_at(t)) {
                const GainsMatrix z = random_gains(rng, 1, tree.n_states());
                l1.push_back(z);
                l2.push_back(same ? GainsMatrix(z.array() + 2.0) : random_gains(rng, 1, tree.n_states()));
                (void)a;
            }
            z1.levels.push_back(l1);
            z2.levels.push_back(l2);
        }
        GainsProcess diff{0, {}};
        bool all_equiv = true;
        for (int t = 0; t < tree.horizon(); ++t) {
            std::vector<GainsMatrix> l;
            for (Atom a : tree.atoms_at(t)) {
                l.push_back(z1.at(a) - z2.at(a));
                all_equiv = all_equiv && equivalent(tree, a, z1.at(a), z2.at(a));
            }
            diff.levels.push_back(l);
        }
        const double norm = seminorm(tree, diff);
        const double path_gap = max_abs_diff(cumulative_gains(tree, z1).at(tree.horizon()),
                                             cumulative_gains(tree, z2).at(tree.horizon()));
        EXPECT_EQ(norm <= 1e-10, all_equiv);
        EXPECT_EQ(path_gap <= 1e-10, all_equiv);
        bool branching = false;
        for (int t = 0; t < tree.horizon(); ++t)
            for (Atom a : tree.atoms_at(t)) branching = branching || tree.support(a).size() > 1;
        if (branching) {
            EXPECT_EQ(same, all_equiv);
        }
    }
}
