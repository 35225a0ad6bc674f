#include "oracles.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace bsde;
using namespace testing_support;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::ParseError;
}

std::vector<Slice> family(std::mt19937_64& rng, const ScenarioTree& tree, int count, int k = 1) {
    std::vector<Slice> out;
    for (int i = 0; i < count; ++i) out.push_back(random_slice(rng, tree, tree.horizon(), k));
    return out;
}

std::vector<std::pair<Slice, Slice>> probe_pairs(std::mt19937_64& rng, const ScenarioTree& tree, int count, int k = 1) {
    std::uniform_real_distribution<double> bump(0.0, 1.0);
    std::bernoulli_distribution keep(0.4);
    std::vector<std::pair<Slice, Slice>> out;
    for (int i = 0; i < count; ++i) {
        const Slice lo = random_slice(rng, tree, tree.horizon(), k);
        Slice hi = lo;
        for (auto& v : hi.values)
            for (int c = 0; c < k; ++c) v[c] += keep(rng) ? 0.0 : bump(rng);
        out.emplace_back(hi, lo);
    }
    return out;
}

}  // namespace

TEST(NonlinearExpectation, ClassicalExpectation) {
    const auto tree = binary_tree(2);
    const auto e = conditional_expectation(tree);
    const Slice q = scalar_slice(2, {0.0, -2.0, 4.0, -1.0});
    EXPECT_NEAR(e.evaluate(q, 0)[0][0], 0.25, 1e-15);
    EXPECT_NEAR(e.evaluate(q, 1)[0][0], -1.0, 1e-15);
    EXPECT_NEAR(e.evaluate(q, 1)[1][0], 1.5, 1e-15);
    EXPECT_NEAR(risk_measure(e, q, 0)[0][0], -0.25, 1e-15);
    std::mt19937_64 rng(61);
    EXPECT_TRUE(verify_axioms(tree, e, probe_pairs(rng, tree, 4)).all_pass());
}

TEST(NonlinearExpectation, DriverBackedTiltExample) {
    const auto tree = binary_tree(2);
    std::mt19937_64 rng(62);
    const auto e = expectation_from_driver(tree, drivers::tilt(1, 0.1, drivers::TiltKind::Max), family(rng, tree, 3));
    EXPECT_EQ(e.provenance, Provenance::DriverBacked);
    ASSERT_TRUE(e.driver.has_value());
    const Slice q = scalar_slice(2, {0.0, -2.0, 4.0, -1.0});
    EXPECT_NEAR(e.evaluate(q, 0)[0][0], 0.5575, 1e-12);
    EXPECT_NEAR(risk_measure(e, q, 0)[0][0], -0.5575, 1e-12);
    EXPECT_NEAR(e.evaluate(q, 1)[0][0], -0.9, 1e-12);
    EXPECT_NEAR(e.evaluate(q, 1)[1][0], 1.75, 1e-12);
}

TEST(NonlinearExpectation, TypedErrors) {
    const auto tree = binary_tree(2);
    std::mt19937_64 rng(63);
    const auto fam = family(rng, tree, 3);
    const Driver y_dep = drivers::linear({Matrix::Constant(1, 1, 0.5), Vector::Zero(1), {}});
    EXPECT_EQ(code_of([&] { expectation_from_driver(tree, y_dep, fam); }), ErrorCode::DriverDependsOnY);
    const Driver offset = drivers::shifted(drivers::zero(), Vector::Constant(1, 0.2));
    EXPECT_EQ(code_of([&] { expectation_from_driver(tree, offset, fam); }), ErrorCode::DriverNotNormalized);

    // a driver that claims y-independence but is not
    Driver liar = drivers::tilt(1, 0.2);
    const auto base = liar.eval;
    liar.eval = [base](const StepContext& c, const Vector& y, const GainsMatrix& z) -> Vector {
        return base(c, y, z) + 0.1 * y;
    };
    EXPECT_EQ(code_of([&] { expectation_from_driver(tree, liar, fam); }), ErrorCode::DriverDependsOnY);

    EXPECT_EQ(code_of([&] { expectation_from_driver(tree, drivers::tilt(1, 2.0), fam); }),
              ErrorCode::BalancednessProbeFailed);
}

TEST(NonlinearExpectation, BalancedReport) {
    const auto tree = binary_tree(2);
    std::mt19937_64 rng(64);
    const auto fam = family(rng, tree, 4);
    const auto good = check_balanced(tree, drivers::tilt(1, 0.5), fam);
    EXPECT_EQ(good.pairs, 12);
    EXPECT_TRUE(good.balanced());
    const auto bad = check_balanced(tree, drivers::tilt(1, 2.0), fam);
    EXPECT_GT(bad.strictness_violations(), 0);
    EXPECT_FALSE(bad.balanced());
}

TEST(NonlinearExpectation, SquaredExpectationViolatesAxioms) {
    const auto tree = binary_tree(2);
    const auto base = conditional_expectation(tree);
    NonlinearExpectation sq;
    sq.name = "squared";
    sq.evaluate = [base](const Slice& q, int t) {
        Slice out = base.evaluate(q, t);
        for (auto& v : out.values) v = v.cwiseProduct(v);
        return out;
    };
    std::mt19937_64 rng(65);
    const auto rep = verify_axioms(tree, sq, probe_pairs(rng, tree, 4));
    EXPECT_FALSE(rep.all_pass());
    EXPECT_GT(rep.find("triviality")->failures, 0);
    EXPECT_GT(rep.find("translation")->failures, 0);
    EXPECT_GT(rep.find("monotonicity")->failures, 0);
}

TEST(NonlinearExpectation, IncrementTerminal) {
    const auto tree = binary_tree(2);
    GainsMatrix z(1, 2);
    z << 1.0, -1.0;
    const Slice q = increment_terminal(tree, tree.root(), z);
    // increments (1, -1) carried to both grandchildren of each child
    EXPECT_NEAR(q[0][0], 1.0, 1e-15);
    EXPECT_NEAR(q[1][0], 1.0, 1e-15);
    EXPECT_NEAR(q[2][0], -1.0, 1e-15);
    EXPECT_NEAR(q[3][0], -1.0, 1e-15);
}

TEST(NonlinearExpectationProperty, DriverToExpectationToDriver) {
    std::mt19937_64 rng(66);
    for (int rep = 0; rep < 4; ++rep) {
        const auto rt = random_tree(rng, 3, 2);
        const auto& tree = rt.tree;
        const int k = 1 + rep % 2;
        const auto fam = family(rng, tree, 3, k);
        for (const auto& d : balanced_drivers(rng, k, tree.n_states())) {
            const auto e = expectation_from_driver(tree, d, fam);
            const Driver back = driver_from_expectation(e);
            for (int t = 0; t < tree.horizon(); ++t)
                for (Atom a : tree.atoms_at(t)) {
                    const GainsMatrix z = random_gains(rng, k, tree.n_states());
                    const Vector y = Vector::Constant(k, 0.3);
                    EXPECT_LE(max_abs(evaluate(back, tree, a, y, z) - evaluate(d, tree, a, y, z)), 1e-10) << d.name;
                }
        }
    }
}

TEST(NonlinearExpectationProperty, ExpectationToDriverToExpectation) {
    std::mt19937_64 rng(67);
    const auto tree = binary_tree(2);
    const auto fam = family(rng, tree, 3);
    std::vector<NonlinearExpectation> sources{conditional_expectation(tree)};
    for (const auto& d : balanced_drivers(rng, 1, 2)) sources.push_back(expectation_from_driver(tree, d, fam));
    for (const auto& e : sources) {
        const auto again = expectation_from_driver(tree, driver_from_expectation(e), fam);
        for (int rep = 0; rep < 4; ++rep) {
            const Slice q = random_slice(rng, tree, 2, 1);
            for (int t = 0; t <= 2; ++t) EXPECT_LE(max_abs_diff(again.evaluate(q, t), e.evaluate(q, t)), 1e-10) << e.name;
        }
    }
}

TEST(NonlinearExpectationProperty, BalancedDriversSatisfyAxioms) {
    std::mt19937_64 rng(68);
    for (int rep = 0; rep < 4; ++rep) {
        const auto rt = random_tree(rng, 3, 3);
        const auto& tree = rt.tree;
        const auto fam = family(rng, tree, 3);
        for (const auto& d : balanced_drivers(rng, 1, tree.n_states())) {
            const auto e = expectation_from_driver(tree, d, fam);
            const auto r = verify_axioms(tree, e, probe_pairs(rng, tree, 3));
            for (const auto& p : r.properties) EXPECT_EQ(p.failures, 0) << d.name << " " << p.name << ": " << p.first_failure;
        }
    }
}
