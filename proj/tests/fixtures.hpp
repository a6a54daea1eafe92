#pragma once

// Shared in-memory fixtures for the unit tests.
//
// fix_a: atoms A=(0,0), B=(1,0), C=(2,1), unit weights, f ≡ 2, V = 1.
//   Brackets 0, 1/2, 1; hand values: lambda = (4,2,0), velocity moments
//   (1,2,0), Q = (-2, +2, 0) on pairs (A,B), (A,C), (B,C), horizon 1/96.
// fix_b: atoms A=(0,0), B'=(1,1), C=(2,1) — the kinked variant whose middle
//   mark has negative chord defect sigma(A,B',C) = -1 (fragmentation active).
// single_pair: two marks with one admissible pair; the collision operator
//   vanishes identically, so transport is exact and testable in isolation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "gibbstess/kernel.hpp"
#include "gibbstess/marks.hpp"

namespace testfix {

using namespace gibbstess;

inline Kernel constant_kernel(MarkSet ms, double V_inf, double value, Grid1D grid,
                              std::vector<double> t_slices) {
    Kernel k;
    k.marks = std::move(ms);
    k.V_inf = V_inf;
    k.delta0 = value;
    k.pairs = PairTable::build(k.marks, V_inf);
    k.grid = grid;
    k.t_slices = std::move(t_slices);
    for (std::size_t s = 0; s < k.t_slices.size(); ++s) {
        k.values.emplace_back(k.grid.n * k.npairs(), value);
    }
    k.validate();
    return k;
}

inline MarkSet fix_a_marks() {
    return make_mark_set({Mark{0.0, 0.0}, Mark{1.0, 0.0}, Mark{2.0, 1.0}}, {1.0, 1.0, 1.0},
                         -1.0, 3.0);
}

inline Kernel fix_a(Grid1D grid = Grid1D{-1.0, 0.125, 25},
                    std::vector<double> t_slices = {0.0}) {
    return constant_kernel(fix_a_marks(), 1.0, 2.0, grid, std::move(t_slices));
}

inline MarkSet fix_b_marks() {
    return make_mark_set({Mark{0.0, 0.0}, Mark{1.0, 1.0}, Mark{2.0, 1.0}}, {1.0, 1.0, 1.0},
                         -1.0, 3.0);
}

inline Kernel fix_b(Grid1D grid = Grid1D{-1.0, 0.125, 25},
                    std::vector<double> t_slices = {0.0}) {
    return constant_kernel(fix_b_marks(), 1.0, 2.0, grid, std::move(t_slices));
}

// Marginal field constant in (x, t), co-gridded with a kernel.
inline MarginalField constant_marginal(const Kernel& k, const std::vector<double>& per_mark) {
    MarginalField f;
    f.marks = k.marks;
    f.V_inf = k.V_inf;
    f.grid = k.grid;
    f.t_slices = k.t_slices;
    double lo = per_mark.front();
    for (double v : per_mark) lo = std::min(lo, v);
    f.floor = lo;
    for (std::size_t s = 0; s < k.t_slices.size(); ++s) {
        std::vector<double> row(k.grid.n * k.marks.size(), 0.0);
        for (std::size_t ix = 0; ix < k.grid.n; ++ix) {
            for (std::size_t i = 0; i < k.marks.size(); ++i) {
                row[ix * k.marks.size() + i] = per_mark[i];
            }
        }
        f.values.push_back(std::move(row));
    }
    return f;
}

inline MarkSet single_pair_marks(double alpha_value = 0.5) {
    return make_mark_set({Mark{0.0, 0.0}, Mark{1.0, alpha_value}}, {1.0, 1.0}, -1.0, 2.0);
}

inline Kernel single_pair(double value = 2.0, double alpha_value = 0.5,
                          Grid1D grid = Grid1D{-1.0, 0.01, 201},
                          std::vector<double> t_slices = {0.0}) {
    return constant_kernel(single_pair_marks(alpha_value), 1.0, value, grid,
                           std::move(t_slices));
}

}  // namespace testfix
