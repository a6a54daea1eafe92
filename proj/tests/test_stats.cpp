// Statistics machinery. Distribution values are frozen from an independent
// reference implementation (tail probabilities and quantiles computed with a
// separately-validated library and pinned here to 12+ digits).

#include "gibbstess/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <vector>

namespace {

using namespace gibbstess;

TEST(ChiSquare, FrozenTailValues) {
    EXPECT_NEAR(chi_square_sf(3.841458820694124, 1), 0.05, 1e-12);
    EXPECT_NEAR(chi_square_sf(11.0705, 5), 0.0499999554280436, 1e-12);
    EXPECT_NEAR(chi_square_sf(16.918977604620448, 9), 0.05, 1e-12);
    EXPECT_NEAR(chi_square_sf(0.5, 3), 0.918891411654676, 1e-12);
    // High-dof tails agree with the reference to ~1e-10 (different continued-
    // fraction truncations); far tighter than any threshold used here.
    EXPECT_NEAR(chi_square_sf(67.50480655864812, 50), 0.05, 1e-9);
    EXPECT_DOUBLE_EQ(chi_square_sf(0.0, 4), 1.0);
    EXPECT_NEAR(chi_square_quantile(0.999, 2), 13.815510557964274, 1e-10);
    EXPECT_THROW(chi_square_sf(1.0, 0), std::invalid_argument);
}

TEST(Normal, FrozenTailValues) {
    EXPECT_NEAR(normal_two_sided_p(4.0), 6.334248366623973e-05, 1e-17);
    EXPECT_NEAR(normal_two_sided_p(-4.0), 6.334248366623973e-05, 1e-17);
    EXPECT_NEAR(normal_sf(0.0), 0.5, 1e-15);
}

TEST(PoissonZ, HandValues) {
    EXPECT_DOUBLE_EQ(poisson_z(110.0, 100.0), 1.0);
    EXPECT_DOUBLE_EQ(poisson_z(80.0, 100.0), -2.0);
    EXPECT_THROW(poisson_z(1.0, 0.0), std::invalid_argument);
}

TEST(ZCells, PoolsLowExpectationCells) {
    // Expectations 3, 4, 5, 40: the first three pool to 12 >= 10, the last
    // stands alone. Observed 2, 5, 6 -> pooled 13, z = 1/sqrt(12).
    const std::vector<double> obs{2, 5, 6, 44};
    const std::vector<double> exp{3, 4, 5, 40};
    const std::vector<std::string> lab{"a", "b", "c", "d"};
    const auto cells = z_cells(obs, exp, lab, 10.0);
    ASSERT_EQ(cells.size(), 2u);
    EXPECT_EQ(cells[0].label, "a+b+c");
    EXPECT_DOUBLE_EQ(cells[0].observed, 13.0);
    EXPECT_DOUBLE_EQ(cells[0].expected, 12.0);
    EXPECT_DOUBLE_EQ(cells[0].z, 1.0 / std::sqrt(12.0));
    EXPECT_DOUBLE_EQ(cells[1].z, 4.0 / std::sqrt(40.0));
    EXPECT_NEAR(max_abs_z(cells), 4.0 / std::sqrt(40.0), 1e-15);
}

TEST(ZCells, TrailingRemainderMergesBackward) {
    // The trailing cell with expectation 1 cannot stand alone; it merges into
    // the previous pooled cell.
    const std::vector<double> obs{12, 2};
    const std::vector<double> exp{11, 1};
    const auto cells = z_cells(obs, exp, {"x", "y"}, 10.0);
    ASSERT_EQ(cells.size(), 1u);
    EXPECT_EQ(cells[0].label, "x+y");
    EXPECT_DOUBLE_EQ(cells[0].observed, 14.0);
    EXPECT_DOUBLE_EQ(cells[0].expected, 12.0);
}

TEST(ChiSquareGof, MatchesHandComputation) {
    // Uniform die, 60 throws: chi2 = sum (o-10)^2/10 = (0+4+1+1+0+4+... )
    const std::vector<double> obs{10, 12, 9, 11, 10, 8};
    const std::vector<double> exp{10, 10, 10, 10, 10, 10};
    const auto r = chi_square_gof(obs, exp, 5.0, true);
    EXPECT_EQ(r.cells_used, 6u);
    EXPECT_DOUBLE_EQ(r.dof, 5.0);
    EXPECT_DOUBLE_EQ(r.stat, (0.0 + 4.0 + 1.0 + 1.0 + 0.0 + 4.0) / 10.0);
    EXPECT_NEAR(r.p_value, chi_square_sf(1.0, 5), 1e-15);
    EXPECT_GT(r.p_value, 0.9);
}

TEST(ChiSquareGof, DetectsAGrossMismatch) {
    const std::vector<double> obs{100, 0, 0, 0};
    const std::vector<double> exp{25, 25, 25, 25};
    const auto r = chi_square_gof(obs, exp);
    EXPECT_LT(r.p_value, 1e-10);
}

TEST(ChiSquareGof, FullyPooledTableIsUninformative) {
    const auto r = chi_square_gof({1, 1}, {1, 1}, 5.0, true);
    EXPECT_DOUBLE_EQ(r.dof, 0.0);
    EXPECT_DOUBLE_EQ(r.p_value, 1.0);
}

TEST(Lag1FisherZ, IndependentVersusAutocorrelated) {
    std::vector<double> xs(4000);
    std::uint64_t state = 88172645463325252ull;  // xorshift64 scratch sequence
    for (double& x : xs) {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        x = static_cast<double>(state >> 11) * 0x1.0p-53;
    }
    EXPECT_LT(std::abs(lag1_fisher_z(xs)), 4.0);

    // A strongly autocorrelated sequence scores far outside the band.
    std::vector<double> ys(4000);
    double y = 0.0;
    std::uint64_t s2 = 1234567ull;
    for (double& v : ys) {
        s2 ^= s2 << 13;
        s2 ^= s2 >> 7;
        s2 ^= s2 << 17;
        const double u = static_cast<double>(s2 >> 11) * 0x1.0p-53;
        y = 0.9 * y + 0.1 * (u - 0.5);
        v = y;
    }
    EXPECT_GT(std::abs(lag1_fisher_z(ys)), 10.0);

    EXPECT_THROW(lag1_fisher_z(std::vector<double>(5, 0.0)), std::invalid_argument);
    EXPECT_DOUBLE_EQ(lag1_fisher_z(std::vector<double>(100, 3.0)), 0.0);
}

TEST(ParallelMapOrdered, DeterministicRegardlessOfThreadCount) {
    const std::size_t n = 257;
    std::function<double(std::size_t)> fn = [](std::size_t i) {
        // Non-associative-friendly values so summation order matters.
        return 1.0 / (1.0 + static_cast<double>(i) * 1e-3) + (i % 7) * 0.1;
    };
    const auto one = parallel_map_ordered<double>(n, fn, 1);
    const auto many = parallel_map_ordered<double>(n, fn, 8);
    ASSERT_EQ(one.size(), n);
    ASSERT_EQ(many.size(), n);
    double s1 = 0.0, s8 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s1 += one[i];
        s8 += many[i];
    }
    EXPECT_EQ(s1, s8);  // bitwise equality: same slots, same sequential merge
}

TEST(ParallelMapOrdered, PropagatesWorkerExceptions) {
    std::function<int(std::size_t)> fn = [](std::size_t i) -> int {
        if (i == 37) throw std::runtime_error("boom");
        return static_cast<int>(i);
    };
    EXPECT_THROW(parallel_map_ordered<int>(64, fn, 4), std::runtime_error);
}

}  // namespace
