// Marks core: order, brackets, reference measures, pair tables, and the
// nodal kernel container. Numeric expectations are hand-computed from the
// three-atom fixture A=(0,0), B=(1,0), C=(2,1) with unit weights.

#include "gibbstess/json_io.hpp"
#include "gibbstess/kernel.hpp"
#include "gibbstess/marks.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace {

using namespace gibbstess;

const Mark A{0.0, 0.0};
const Mark B{1.0, 0.0};
const Mark C{2.0, 1.0};

MarkSet three_atoms() {
    return make_mark_set({A, B, C}, {1.0, 1.0, 1.0}, -1.0, 3.0);
}

TEST(Marks, OrderAndBracket) {
    EXPECT_TRUE(precedes(A, B));
    EXPECT_TRUE(precedes(B, C));
    EXPECT_FALSE(precedes(B, A));
    EXPECT_FALSE(precedes(A, A));

    EXPECT_DOUBLE_EQ(alpha(A, B), 0.0);
    EXPECT_DOUBLE_EQ(alpha(A, C), 0.5);
    EXPECT_DOUBLE_EQ(alpha(B, C), 1.0);
    // The bracket is symmetric in its arguments.
    EXPECT_DOUBLE_EQ(alpha(C, A), alpha(A, C));

    EXPECT_THROW(alpha(A, Mark{0.0, 5.0}), std::invalid_argument);
}

TEST(Marks, TauIsOrthogonalToTheMarkDifference) {
    const Vec2 t = tau(A, C);
    EXPECT_DOUBLE_EQ(t.x, -0.5);
    EXPECT_DOUBLE_EQ(t.y, 1.0);
    EXPECT_DOUBLE_EQ(dot(t, Vec2{C.rho1 - A.rho1, C.rho2 - A.rho2}), 0.0);
    EXPECT_THROW(tau(C, A), std::invalid_argument);
}

TEST(Marks, TripleBracket) {
    EXPECT_DOUBLE_EQ(sigma_triple(A, B, C), 1.0);  // 1 - 0
    EXPECT_THROW(sigma_triple(B, A, C), std::invalid_argument);

    // The kinked fixture A, B' = (1,1), C has a negative defect: chords bend
    // downward through the middle mark.
    const Mark Bp{1.0, 1.0};
    EXPECT_DOUBLE_EQ(sigma_triple(A, Bp, C), -1.0);  // 0 - 1
}

TEST(Marks, PosNegParts) {
    EXPECT_DOUBLE_EQ(pos_part(2.5), 2.5);
    EXPECT_DOUBLE_EQ(pos_part(-2.5), 0.0);
    EXPECT_DOUBLE_EQ(neg_part(-2.5), 2.5);
    EXPECT_DOUBLE_EQ(neg_part(2.5), 0.0);
}

TEST(MarkSetBuild, SortsAndValidates) {
    // Unsorted input comes out sorted by rho1 with weights kept aligned.
    MarkSet ms = make_mark_set({C, A, B}, {3.0, 1.0, 2.0}, -1.0, 3.0);
    EXPECT_EQ(ms.atoms[0], A);
    EXPECT_EQ(ms.atoms[1], B);
    EXPECT_EQ(ms.atoms[2], C);
    EXPECT_DOUBLE_EQ(ms.weights[0], 1.0);
    EXPECT_DOUBLE_EQ(ms.weights[1], 2.0);
    EXPECT_DOUBLE_EQ(ms.weights[2], 3.0);
    EXPECT_DOUBLE_EQ(ms.total_mass(), 6.0);
    EXPECT_EQ(ms.index_of(B), 1u);
    EXPECT_EQ(ms.index_of(Mark{5.0, 5.0}), MarkSet::npos);

    EXPECT_THROW(make_mark_set({A, Mark{0.0, 1.0}}, {1.0, 1.0}, -1.0, 3.0),
                 std::invalid_argument);  // duplicate rho1
    EXPECT_THROW(make_mark_set({A, B}, {1.0, 0.0}, -1.0, 3.0),
                 std::invalid_argument);  // nonpositive weight
    EXPECT_THROW(make_mark_set({A, B}, {1.0, 1.0}, 0.5, 3.0),
                 std::invalid_argument);  // A outside [P_lo, P_hi]^2
    EXPECT_THROW(make_mark_set({A, B}, {1.0}, -1.0, 3.0), std::invalid_argument);
    EXPECT_THROW(make_mark_set({}, {}, -1.0, 3.0), std::invalid_argument);
}

TEST(MarkSetBuild, GraphFlagRequiresIncreasingRho2) {
    // A and B share rho2 = 0, so they cannot sit on an increasing graph.
    EXPECT_THROW(make_mark_set({A, B, C}, {1.0, 1.0, 1.0}, -1.0, 3.0, true),
                 std::invalid_argument);
    const MarkSet ok =
        make_mark_set({Mark{0.0, 0.0}, Mark{1.0, 1.0}, Mark{2.0, 4.0}}, {1.0, 1.0, 1.0},
                      -1.0, 5.0, true);
    EXPECT_TRUE(ok.graph);
}

TEST(Regions, MembershipAndIntegration) {
    const MarkSet ms = three_atoms();

    const Region right_of_A = Region::right_of(A);
    EXPECT_FALSE(right_of_A.contains(A));
    EXPECT_TRUE(right_of_A.contains(B));
    EXPECT_TRUE(right_of_A.contains(C));

    const Region left_of_B = Region::left_of(B);
    EXPECT_TRUE(left_of_B.contains(A));
    EXPECT_FALSE(left_of_B.contains(B));
    EXPECT_FALSE(left_of_B.contains(C));

    const Region between = Region::between(A, C);
    EXPECT_FALSE(between.contains(A));
    EXPECT_TRUE(between.contains(B));
    EXPECT_FALSE(between.contains(C));

    // With f == 2 on every pair, the jump intensity lambda(rho) = ∫_{R(rho)} f dβ
    // takes values 4, 2, 0 on A, B, C, and the velocity moment
    // ∫_{R(rho)} alpha(rho,·) f dβ takes values 1, 2, 0.
    auto two = [](const Mark&) { return 2.0; };
    EXPECT_DOUBLE_EQ(beta_integrate(ms, two, Region::right_of(A)), 4.0);
    EXPECT_DOUBLE_EQ(beta_integrate(ms, two, Region::right_of(B)), 2.0);
    EXPECT_DOUBLE_EQ(beta_integrate(ms, two, Region::right_of(C)), 0.0);

    auto alpha_from_A = [&](const Mark& m) { return alpha(A, m) * 2.0; };
    EXPECT_DOUBLE_EQ(beta_integrate(ms, alpha_from_A, Region::right_of(A)), 1.0);
    auto alpha_from_B = [&](const Mark& m) { return alpha(B, m) * 2.0; };
    EXPECT_DOUBLE_EQ(beta_integrate(ms, alpha_from_B, Region::right_of(B)), 2.0);
}

TEST(PairTableBuild, IndicesBracketsAndCones) {
    const MarkSet ms = three_atoms();
    const PairTable t = PairTable::build(ms, 1.0);

    EXPECT_EQ(t.npairs(), 3u);
    EXPECT_EQ(t.index(0, 1), 0u);
    EXPECT_EQ(t.index(0, 2), 1u);
    EXPECT_EQ(t.index(1, 2), 2u);
    EXPECT_THROW(t.index(1, 1), std::out_of_range);
    EXPECT_THROW(t.index(2, 1), std::out_of_range);
    EXPECT_THROW(t.index(0, 3), std::out_of_range);

    EXPECT_DOUBLE_EQ(t.alpha_of(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(t.alpha_of(0, 2), 0.5);
    EXPECT_DOUBLE_EQ(t.alpha_of(1, 2), 1.0);

    // V_inf = 1 admits all three pairs, and all brackets are >= 0.
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = i + 1; j < 3; ++j) {
            EXPECT_TRUE(t.in_cone(i, j));
            EXPECT_TRUE(t.in_plus_cone(i, j));
        }
    }

    // A tighter velocity bound excludes the steepest pair (B, C).
    const PairTable tight = PairTable::build(ms, 0.75);
    EXPECT_TRUE(tight.in_cone(0, 1));
    EXPECT_TRUE(tight.in_cone(0, 2));
    EXPECT_FALSE(tight.in_cone(1, 2));

    // A negative bracket stays in the cone but not the one-sided cone.
    const MarkSet kinked =
        make_mark_set({Mark{0.0, 1.0}, Mark{1.0, 0.0}}, {1.0, 1.0}, -1.0, 2.0);
    const PairTable kt = PairTable::build(kinked, 1.0);
    EXPECT_DOUBLE_EQ(kt.alpha_of(0, 1), -1.0);
    EXPECT_TRUE(kt.in_cone(0, 1));
    EXPECT_FALSE(kt.in_plus_cone(0, 1));
}

Kernel constant_kernel(double value, std::size_t nt = 2) {
    Kernel k;
    k.marks = three_atoms();
    k.V_inf = 1.0;
    k.delta0 = value;
    k.pairs = PairTable::build(k.marks, k.V_inf);
    k.grid = Grid1D{0.0, 0.25, 9};  // [0, 2]
    for (std::size_t s = 0; s < nt; ++s) {
        k.t_slices.push_back(static_cast<double>(s));
        k.values.emplace_back(k.grid.n * k.npairs(), value);
    }
    k.validate();
    return k;
}

TEST(KernelEval, ConstantAndBilinear) {
    const Kernel k = constant_kernel(2.0);
    EXPECT_DOUBLE_EQ(kernel_eval(k, 0.37, 0.41, 0, 2), 2.0);
    EXPECT_DOUBLE_EQ(kernel_eval(k, 2.0, 1.0, 1, 2), 2.0);
    EXPECT_DOUBLE_EQ(kernel_eval(k, 0.0, 0.0, A, C), 2.0);
    EXPECT_DOUBLE_EQ(k.M0(), 2.0);
    EXPECT_DOUBLE_EQ(k.slice_inf_on_cone(0), 2.0);

    // Nodal data linear in x on pair (A,B), doubled on the later slice:
    // interpolation reproduces f(x,t) = (1+t)·x exactly.
    Kernel lin = constant_kernel(0.0);
    for (std::size_t ix = 0; ix < lin.grid.n; ++ix) {
        lin.at(0, ix, 0) = lin.grid.x_at(ix);
        lin.at(1, ix, 0) = 2.0 * lin.grid.x_at(ix);
    }
    EXPECT_NEAR(kernel_eval(lin, 0.3, 0.5, 0, 1), 0.45, 1e-15);
    EXPECT_NEAR(kernel_eval(lin, 1.9, 0.25, 0, 1), 1.25 * 1.9, 1e-14);
    EXPECT_DOUBLE_EQ(kernel_eval(lin, 0.3, 0.5, 0, 2), 0.0);
}

TEST(KernelEval, RangeAndOrderErrors) {
    const Kernel k = constant_kernel(2.0);
    EXPECT_THROW(kernel_eval(k, -0.1, 0.5, 0, 1), std::out_of_range);
    EXPECT_THROW(kernel_eval(k, 2.1, 0.5, 0, 1), std::out_of_range);
    EXPECT_THROW(kernel_eval(k, 1.0, 1.5, 0, 1), std::out_of_range);
    EXPECT_THROW(kernel_eval(k, 1.0, -0.5, 0, 1), std::out_of_range);
    EXPECT_THROW(kernel_eval(k, 1.0, 0.5, C, A), std::invalid_argument);
    EXPECT_THROW(kernel_eval(k, 1.0, 0.5, Mark{9.0, 9.0}, C), std::invalid_argument);

    // Edge nodes are reachable within rounding tolerance.
    EXPECT_DOUBLE_EQ(kernel_eval(k, 2.0 + 1e-12, 1.0, 0, 1), 2.0);
}

TEST(KernelEval, OutOfConePairsAreZero) {
    Kernel k = constant_kernel(2.0);
    // Rebuild with a tighter bound: pair (B,C) leaves the cone, so its stored
    // values must be zeroed for the kernel to validate, and it evaluates to 0.
    k.V_inf = 0.75;
    k.pairs = PairTable::build(k.marks, k.V_inf);
    EXPECT_THROW(k.validate(), std::invalid_argument);
    for (auto& slice : k.values) {
        for (std::size_t ix = 0; ix < k.grid.n; ++ix) slice[ix * k.npairs() + 2] = 0.0;
    }
    k.validate();
    EXPECT_DOUBLE_EQ(kernel_eval(k, 1.0, 0.5, 1, 2), 0.0);
}

TEST(KernelValidate, RejectsBadShapesAndValues) {
    Kernel k = constant_kernel(2.0);
    k.values[1][5] = -1e-9;
    EXPECT_THROW(k.validate(), std::invalid_argument);

    Kernel k2 = constant_kernel(2.0);
    k2.values[0].pop_back();
    EXPECT_THROW(k2.validate(), std::invalid_argument);

    Kernel k3 = constant_kernel(2.0);
    k3.t_slices = {0.0, 0.0};
    EXPECT_THROW(k3.validate(), std::invalid_argument);
}

TEST(KernelJson, ParsesTheDocumentedLayout) {
    const char* doc = R"({
      "P": [-1.0, 3.0],
      "V_inf": 1.0,
      "delta0": 2.0,
      "atoms": [[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [2.0, 1.0, 1.0]],
      "grid": {"x0": 0.0, "dx": 1.0, "n": 2},
      "slices": [
        {"t": 0.0, "values": [2, 2, 2, 2, 2, 2]},
        {"t": 0.5, "values": [2, 3, 2, 2, 3, 2]}
      ]
    })";
    const Kernel k = kernel_from_json(json::parse(doc));
    EXPECT_EQ(k.marks.size(), 3u);
    EXPECT_EQ(k.grid.n, 2u);
    EXPECT_DOUBLE_EQ(k.delta0, 2.0);
    // Slice values are row-major over nodes then ordered pairs: index 1 of
    // the t=0.5 slice is node 0, pair (A,C).
    EXPECT_DOUBLE_EQ(kernel_eval(k, 0.0, 0.5, 0, 2), 3.0);
    EXPECT_DOUBLE_EQ(kernel_eval(k, 0.0, 0.25, 0, 2), 2.5);
    EXPECT_DOUBLE_EQ(kernel_eval(k, 0.0, 0.5, 0, 1), 2.0);

    // Semantic fields survive a save/load cycle.
    const json j = kernel_to_json(k);
    const Kernel k2 = kernel_from_json(j);
    EXPECT_EQ(k2.t_slices, k.t_slices);
    EXPECT_EQ(k2.values, k.values);
    EXPECT_DOUBLE_EQ(k2.marks.P_hi, 3.0);
}

TEST(KernelJson, MissingKeyIsAnError) {
    json j = kernel_to_json(constant_kernel(2.0));
    j.erase("V_inf");
    EXPECT_THROW(kernel_from_json(j), std::runtime_error);
}

TEST(MarginalFieldJson, RoundTripWithFloor) {
    MarginalField f;
    f.marks = three_atoms();
    f.V_inf = 1.0;
    f.grid = Grid1D{0.0, 0.5, 3};
    f.t_slices = {0.0, 1.0};
    f.values = {{0.1, 0.2, 0.7, 0.1, 0.2, 0.7, 0.1, 0.2, 0.7},
                {0.2, 0.2, 0.6, 0.2, 0.2, 0.6, 0.2, 0.2, 0.6}};
    f.floor = 0.1;
    f.validate();

    const MarginalField g = marginal_from_json(marginal_to_json(f));
    EXPECT_DOUBLE_EQ(g.floor, 0.1);
    EXPECT_DOUBLE_EQ(marginal_eval(g, 0.25, 0.5, 0), 0.15);
    EXPECT_DOUBLE_EQ(marginal_eval(g, 1.0, 1.0, 2), 0.6);
}

}  // namespace
