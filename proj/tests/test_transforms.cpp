// Transform algebra: reversal (l-ratio reweighting + reflection), the
// space/time swap with reciprocal slopes, and the shear pushforward.

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fixtures.hpp"
#include "gibbstess/forward.hpp"
#include "gibbstess/kinetic.hpp"
#include "gibbstess/transforms.hpp"

using namespace gibbstess;

namespace {

// Two marks with a prescribed slope, one admissible pair, constant value.
Kernel two_mark_kernel(double alpha_value, double value, Grid1D grid = Grid1D{0.0, 0.25, 5},
                       std::vector<double> t_slices = {0.0}) {
    return testfix::constant_kernel(testfix::single_pair_marks(alpha_value), 1.0, value, grid,
                                    std::move(t_slices));
}

// Weak rates with sinusoidal x-structure: the solution's residual is then
// dominated by honest transport truncation, which the transforms carry
// covariantly; the l-ratio reweighting stays close to 1.
Kernel wavy_kernel(MarkSet ms, double V_inf) {
    Kernel k = testfix::constant_kernel(std::move(ms), V_inf, 0.1, Grid1D{-1.0, 0.05, 61}, {0.0});
    for (std::size_t ix = 0; ix < k.grid.n; ++ix) {
        const double v = 0.1 * (1.0 + 0.5 * std::sin(M_PI * k.grid.x_at(ix)));
        for (std::size_t p = 0; p < k.npairs(); ++p) {
            if (k.pairs.in_cone_[p]) k.values[0][ix * k.npairs() + p] = v;
        }
    }
    k.delta0 = 0.05;
    k.validate();
    return k;
}

}  // namespace

TEST(ReverseKernel, TwoMarkHandValue) {
    // l = (2/3, 1/3), f(A,B) = 3: the reversed rate is (2/3)/(1/3) * 3 = 6.
    Kernel f = two_mark_kernel(0.5, 3.0);
    auto ell = testfix::constant_marginal(f, {2.0 / 3.0, 1.0 / 3.0});
    Kernel rev = reverse_kernel(f, ell, /*reflect=*/false);
    ASSERT_EQ(rev.marks.size(), 2u);
    // Marks are negated and re-sorted: (-1,-0.5) then (0,0); the slope of the
    // single pair is preserved.
    EXPECT_DOUBLE_EQ(rev.marks.mark(0).rho1, -1.0);
    EXPECT_DOUBLE_EQ(rev.marks.mark(0).rho2, -0.5);
    EXPECT_DOUBLE_EQ(rev.marks.mark(1).rho1, 0.0);
    EXPECT_DOUBLE_EQ(rev.pairs.alpha_of(0, 1), 0.5);
    for (std::size_t ix = 0; ix < rev.grid.n; ++ix) {
        EXPECT_DOUBLE_EQ(rev.at(0, ix, 0), 6.0);
    }
    // Without reflection the axes are untouched.
    EXPECT_DOUBLE_EQ(rev.grid.x0, f.grid.x0);
    EXPECT_EQ(rev.t_slices, f.t_slices);
}

TEST(ReverseKernel, UniformMarginalTransposesPairs) {
    // Distinct values per pair, uniform l: reversal just transposes pairs.
    Kernel f = testfix::fix_a(Grid1D{-1.0, 0.5, 5}, {0.0});
    f.at(0, 0, f.pairs.index(0, 1)) = 1.0;  // keep x-constant rows per pair
    for (std::size_t ix = 0; ix < f.grid.n; ++ix) {
        f.at(0, ix, f.pairs.index(0, 1)) = 1.0;
        f.at(0, ix, f.pairs.index(0, 2)) = 2.0;
        f.at(0, ix, f.pairs.index(1, 2)) = 3.0;
    }
    f.delta0 = 1.0;
    auto ell = testfix::constant_marginal(f, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    Kernel rev = reverse_kernel(f, ell, /*reflect=*/false);
    // Negated marks sort as (-C, -B, -A); pair (i,j) -> (2-j, 2-i).
    EXPECT_DOUBLE_EQ(rev.at(0, 0, rev.pairs.index(0, 1)), 3.0);  // (B,C)
    EXPECT_DOUBLE_EQ(rev.at(0, 0, rev.pairs.index(0, 2)), 2.0);  // (A,C)
    EXPECT_DOUBLE_EQ(rev.at(0, 0, rev.pairs.index(1, 2)), 1.0);  // (A,B)
}

TEST(ReverseKernel, ReflectionFlipsAxes) {
    std::vector<double> slices = {0.0, 0.1, 0.2};
    Kernel f = two_mark_kernel(0.5, 1.0, Grid1D{0.0, 0.25, 5}, slices);
    // Tag one corner: value at (x = 0, t = 0.2).
    f.at(2, 0, 0) = 7.0;
    auto ell = testfix::constant_marginal(f, {0.5, 0.5});
    Kernel rev = reverse_kernel(f, ell, /*reflect=*/true);
    EXPECT_DOUBLE_EQ(rev.grid.x0, -1.0);  // [-x_max, ..., -x0]
    EXPECT_DOUBLE_EQ(rev.t_slices.front(), -0.2);
    EXPECT_DOUBLE_EQ(rev.t_slices.back(), 0.0);
    // The tagged corner moves to (x = 0 -> -0, t = 0.2 -> -0.2): slice 0,
    // node 4 (x = 0 is the last node of the reflected grid).
    EXPECT_DOUBLE_EQ(rev.at(0, 4, 0), 7.0);
}

TEST(ReverseKernel, DivisionGuard) {
    Kernel f = two_mark_kernel(0.5, 3.0);
    auto ell = testfix::constant_marginal(f, {1.0, 0.0});
    EXPECT_THROW(reverse_kernel(f, ell), std::runtime_error);
}

TEST(ReverseKernel, ReflectedSolutionSatisfiesTheEquation) {
    // Criterion: the reversed-and-reflected solution has kinetic residual
    // within 2x the forward solution's own residual.
    Kernel ic = wavy_kernel(testfix::fix_a_marks(), 1.0);
    const double T = 0.04;  // horizon tstar(1, 0.15, 0.05) ~ 0.046
    Kernel sol = solve_kinetic(ic, T, 8, Scheme::Polygonal);
    auto ell = build_ell_box(sol, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 0.0, 1.0, T, 32, 8);
    Kernel rev = reverse_kernel(sol, ell, /*reflect=*/true);
    const double res_fwd = kinetic_residual(sol);
    const double res_rev = kinetic_residual(rev);
    EXPECT_GT(res_fwd, 0.0);
    EXPECT_LE(res_rev, 2.0 * res_fwd);
}

TEST(ReverseMarginal, CarriesValuesToNegatedMarks) {
    Kernel f = testfix::fix_a(Grid1D{-1.0, 0.5, 5}, {0.0, 0.1});
    auto ell = testfix::constant_marginal(f, {0.2, 0.5, 0.3});
    auto rev = reverse_marginal(ell, /*reflect=*/true);
    EXPECT_DOUBLE_EQ(rev.at(0, 0, 0), 0.3);  // -C carries l(C)
    EXPECT_DOUBLE_EQ(rev.at(0, 0, 2), 0.2);  // -A carries l(A)
    EXPECT_DOUBLE_EQ(rev.grid.x0, -1.0);
    EXPECT_DOUBLE_EQ(rev.t_slices.front(), -0.1);
}

TEST(SwapKernel, ReciprocalSlopeAndHandValue) {
    // alpha = 2 maps to 1/2; the value picks up the l-ratio and the slope:
    // (2/3)/(1/3) * 2 * 3 = 12.
    Kernel f = testfix::constant_kernel(
        make_mark_set({Mark{0.0, 0.0}, Mark{0.5, 1.0}}, {1.0, 1.0}, -2.0, 2.0), 2.5, 3.0,
        Grid1D{0.0, 0.25, 5}, {0.0, 0.1, 0.2});
    auto ell = testfix::constant_marginal(f, {2.0 / 3.0, 1.0 / 3.0});
    Kernel bar = swap_kernel(f, ell);
    ASSERT_EQ(bar.marks.size(), 2u);
    // Marks map through rho -> (-rho2, -rho1): (-1, -0.5) and (0, 0).
    EXPECT_DOUBLE_EQ(bar.marks.mark(0).rho1, -1.0);
    EXPECT_DOUBLE_EQ(bar.marks.mark(0).rho2, -0.5);
    EXPECT_DOUBLE_EQ(bar.pairs.alpha_of(0, 1), 0.5);
    EXPECT_DOUBLE_EQ(bar.at(0, 0, 0), 12.0);
    // Axes: new grid from negated slice times, new slices from negated nodes.
    EXPECT_DOUBLE_EQ(bar.grid.x0, -0.2);
    EXPECT_DOUBLE_EQ(bar.grid.dx, 0.1);
    EXPECT_EQ(bar.grid.n, 3u);
    ASSERT_EQ(bar.t_slices.size(), 5u);
    EXPECT_DOUBLE_EQ(bar.t_slices.front(), -1.0);
    EXPECT_DOUBLE_EQ(bar.t_slices.back(), 0.0);
}

TEST(SwapKernel, AxisTransposition) {
    // An (x, t)-dependent kernel lands transposed: output at (x1b, x2b)
    // reads the original at (x1, x2) = (-x2b, -x1b).
    std::vector<double> slices = {0.0, 0.1, 0.2};
    Kernel f = testfix::constant_kernel(
        make_mark_set({Mark{0.0, 0.0}, Mark{0.5, 1.0}}, {1.0, 1.0}, -2.0, 2.0), 2.5, 1.0,
        Grid1D{0.0, 0.25, 5}, slices);
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t ix = 0; ix < 5; ++ix) {
            f.at(s, ix, 0) = 1.0 + f.grid.x_at(ix) + 2.0 * slices[s];
        }
    }
    auto ell = testfix::constant_marginal(f, {0.5, 0.5});
    Kernel bar = swap_kernel(f, ell);
    // Output slice 0 is x2b = -1, node 0 is x1b = -0.2: reads original
    // (x, t) = (1, 0.2): value = (1 + 1 + 0.4) * alpha = 2.4 * 2.
    EXPECT_DOUBLE_EQ(bar.at(0, 0, 0), 2.0 * 2.4);
    // Output slice 4 (x2b = 0), node 1 (x1b = -0.1) reads (x, t) = (0, 0.1):
    // value = 1.2 * 2.
    EXPECT_DOUBLE_EQ(bar.at(4, 1, 0), 2.0 * 1.2);
}

TEST(SwapKernel, SupportConditionError) {
    // A pair with slope 0 carrying mass cannot be swapped.
    Kernel flat = two_mark_kernel(0.0, 1.0, Grid1D{0.0, 0.25, 5}, {0.0, 0.1});
    auto ell = testfix::constant_marginal(flat, {0.5, 0.5});
    EXPECT_THROW(swap_kernel(flat, ell), std::invalid_argument);
    // A sub-threshold slope trips the default floor but passes a looser one.
    Kernel low = two_mark_kernel(5e-4, 1.0, Grid1D{0.0, 0.25, 5}, {0.0, 0.1});
    auto ell2 = testfix::constant_marginal(low, {0.5, 0.5});
    EXPECT_THROW(swap_kernel(low, ell2), std::invalid_argument);
    EXPECT_NO_THROW(swap_kernel(low, ell2, /*alpha_min=*/1e-4));
}

TEST(SwapKernel, NonUniformSlicesRejected) {
    Kernel f = two_mark_kernel(0.5, 1.0, Grid1D{0.0, 0.25, 5}, {0.0, 0.1, 0.3});
    auto ell = testfix::constant_marginal(f, {0.5, 0.5});
    EXPECT_THROW(swap_kernel(f, ell), std::invalid_argument);
}

TEST(SwapKernel, DoubleSwapIsTheIdentity) {
    // Criterion: double swap returns the original kernel to 1e-12 (the
    // l-ratios and slopes telescope).
    std::vector<double> slices = {0.0, 0.1, 0.2, 0.3};
    Kernel f = testfix::constant_kernel(
        make_mark_set({Mark{0.0, 0.0}, Mark{0.5, 1.0}}, {1.0, 0.7}, -2.0, 2.0), 2.5, 1.0,
        Grid1D{-0.5, 0.25, 7}, slices);
    for (std::size_t s = 0; s < slices.size(); ++s) {
        for (std::size_t ix = 0; ix < f.grid.n; ++ix) {
            f.at(s, ix, 0) = 1.0 + 0.3 * f.grid.x_at(ix) + 0.5 * slices[s];
        }
    }
    MarginalField ell = testfix::constant_marginal(f, {0.6, 0.4});
    // Give l some structure too (values only need positivity, not mass).
    for (std::size_t s = 0; s < slices.size(); ++s) {
        for (std::size_t ix = 0; ix < f.grid.n; ++ix) {
            ell.at(s, ix, 0) = 0.6 + 0.1 * f.grid.x_at(ix) + 0.2 * slices[s];
            ell.at(s, ix, 1) = 0.4 - 0.05 * f.grid.x_at(ix);
        }
    }
    Kernel once = swap_kernel(f, ell);
    MarginalField ell_bar = swap_marginal(ell);
    Kernel twice = swap_kernel(once, ell_bar);

    ASSERT_EQ(twice.marks.size(), f.marks.size());
    for (std::size_t i = 0; i < f.marks.size(); ++i) {
        EXPECT_DOUBLE_EQ(twice.marks.mark(i).rho1, f.marks.mark(i).rho1);
        EXPECT_DOUBLE_EQ(twice.marks.mark(i).rho2, f.marks.mark(i).rho2);
    }
    EXPECT_NEAR(twice.grid.x0, f.grid.x0, 1e-12);
    ASSERT_EQ(twice.t_slices.size(), f.t_slices.size());
    ASSERT_EQ(twice.grid.n, f.grid.n);
    for (std::size_t s = 0; s < slices.size(); ++s) {
        for (std::size_t ix = 0; ix < f.grid.n; ++ix) {
            EXPECT_NEAR(twice.at(s, ix, 0), f.at(s, ix, 0), 1e-12);
        }
    }
}

TEST(SwapKernel, SwappedSolutionSatisfiesItsOwnEquation) {
    // A kernel supported on slopes >= 1 (away from horizontal chords):
    // the swapped output must satisfy the kinetic equation with its own
    // reciprocal bracket table, with residual within 2x the forward one.
    MarkSet ms = make_mark_set({Mark{0.0, 0.0}, Mark{1.0, 1.0}, Mark{2.0, 2.1}},
                               {1.0, 1.0, 1.0}, -1.0, 4.0);
    Kernel ic = wavy_kernel(std::move(ms), 1.2);
    const double T = 0.03;  // horizon tstar(1.2, 0.15, 0.05) ~ 0.039
    Kernel sol = solve_kinetic(ic, T, 6, Scheme::Polygonal);
    auto ell = build_ell_box(sol, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 0.0, 1.0, T, 32, 8);
    Kernel bar = swap_kernel(sol, ell);
    const double res_fwd = kinetic_residual(sol);
    const double res_bar = kinetic_residual(bar);
    EXPECT_GT(res_fwd, 0.0);
    EXPECT_LE(res_bar, 2.0 * res_fwd);
}

TEST(Shear, ZeroShearIsIdentity) {
    Kernel f = testfix::fix_a(Grid1D{-1.0, 0.125, 25}, {0.0, 0.01});
    Kernel g = shear_pushforward(f, 0.0);
    ASSERT_EQ(g.marks.size(), f.marks.size());
    for (std::size_t i = 0; i < f.marks.size(); ++i) {
        EXPECT_DOUBLE_EQ(g.marks.mark(i).rho2, f.marks.mark(i).rho2);
    }
    EXPECT_EQ(g.values, f.values);
    EXPECT_DOUBLE_EQ(g.V_inf, f.V_inf);
}

TEST(Shear, SlopesShiftByC) {
    // alpha = -0.5 with c = 1 becomes +0.5; marks move to (rho1, rho2 + c rho1).
    Kernel f = two_mark_kernel(-0.5, 2.0);
    Kernel g = shear_pushforward(f, 1.0);
    EXPECT_DOUBLE_EQ(g.pairs.alpha_of(0, 1), 0.5);
    EXPECT_DOUBLE_EQ(g.marks.mark(1).rho2, -0.5 + 1.0);
    EXPECT_DOUBLE_EQ(g.V_inf, f.V_inf + 1.0);
    // x-independent data is gathered exactly.
    for (std::size_t ix = 0; ix < g.grid.n; ++ix) {
        EXPECT_DOUBLE_EQ(g.at(0, ix, 0), 2.0);
    }
}

TEST(Shear, ResidualIsPreservedForSolutions) {
    // For x-independent solutions the shear is exact and the collision
    // operator is shear-covariant, so the discrete residual is unchanged.
    const double T = 1.0 / 192.0;
    Kernel sol = solve_kinetic(testfix::fix_a(), T, 16, Scheme::Polygonal);
    Kernel sheared = shear_pushforward(sol, 2.0);
    const double res = kinetic_residual(sol);
    const double res_sheared = kinetic_residual(sheared);
    EXPECT_NEAR(res_sheared, res, 1e-10 + 1e-6 * res);
}

TEST(Shear, MarginalMovesMarks) {
    Kernel f = testfix::fix_a(Grid1D{-1.0, 0.125, 25}, {0.0, 0.01});
    auto ell = testfix::constant_marginal(f, {0.2, 0.5, 0.3});
    auto sheared = shear_marginal(ell, 2.0);
    EXPECT_DOUBLE_EQ(sheared.marks.mark(2).rho2, 1.0 + 2.0 * 2.0);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(sheared.at(0, 0, i), ell.at(0, 0, i));
    }
}
