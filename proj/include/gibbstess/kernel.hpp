#pragma once

// Discretized pair kernel f(x, t, a, b) on ordered mark pairs a ≺ b.
//
// Storage is nodal: a uniform grid in x, an increasing list of time slices,
// and per slice a flat row-major array values[ix * npairs + p] over grid
// nodes and ordered pairs (PairTable order). Evaluation is bilinear: linear
// in x within the grid and linear in t between adjacent slices. Pairs outside
// the admissible cone |alpha| <= V_inf evaluate to zero identically; the
// solvers preserve that support exactly, and validation enforces it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "marks.hpp"

namespace gibbstess {

struct Grid1D {
    double x0 = 0.0;   // leftmost node
    double dx = 0.0;   // node spacing, > 0
    std::size_t n = 0; // node count, >= 2

    double x_at(std::size_t i) const { return x0 + static_cast<double>(i) * dx; }
    double x_max() const { return x_at(n - 1); }

    // Locate x in the grid: cell index i with x in [x_at(i), x_at(i+1)] and
    // the interpolation fraction. Points within a small tolerance of the
    // edges are clamped; anything further out is a caller error.
    struct Locate {
        std::size_t i;
        double frac;
    };
    Locate locate(double x) const {
        const double tol = 1e-9 * dx;
        if (x < x0 - tol || x > x_max() + tol) {
            throw std::out_of_range("grid: x = " + std::to_string(x) + " outside [" +
                                    std::to_string(x0) + ", " + std::to_string(x_max()) + "]");
        }
        double s = (x - x0) / dx;
        if (s < 0.0) s = 0.0;
        std::size_t i = static_cast<std::size_t>(s);
        if (i >= n - 1) i = n - 2;
        double frac = s - static_cast<double>(i);
        if (frac < 0.0) frac = 0.0;
        if (frac > 1.0) frac = 1.0;
        return Locate{i, frac};
    }
};

// Bracket of the slice times containing t, with interpolation weight.
struct TimeLocate {
    std::size_t s;  // lower slice, values interpolate between s and s+1
    double frac;    // 0 at t_slices[s], 1 at t_slices[s+1]
};

inline TimeLocate locate_time(const std::vector<double>& t_slices, double t) {
    const double t_lo = t_slices.front();
    const double t_hi = t_slices.back();
    const double span = t_hi - t_lo;
    const double tol = 1e-9 * (span > 0.0 ? span : 1.0);
    if (t < t_lo - tol || t > t_hi + tol) {
        throw std::out_of_range("time slices: t = " + std::to_string(t) + " outside [" +
                                std::to_string(t_lo) + ", " + std::to_string(t_hi) + "]");
    }
    if (t_slices.size() == 1) return TimeLocate{0, 0.0};
    const auto ub = std::upper_bound(t_slices.begin(), t_slices.end(), t);
    std::size_t s = ub == t_slices.begin() ? 0 : static_cast<std::size_t>(ub - t_slices.begin()) - 1;
    if (s > t_slices.size() - 2) s = t_slices.size() - 2;
    double frac = (t - t_slices[s]) / (t_slices[s + 1] - t_slices[s]);
    if (frac < 0.0) frac = 0.0;
    if (frac > 1.0) frac = 1.0;
    return TimeLocate{s, frac};
}

struct Kernel {
    MarkSet marks;
    PairTable pairs;
    double V_inf = 0.0;   // velocity bound: support cone is |alpha| <= V_inf
    double delta0 = 0.0;  // lower bound of the initial data on the cone
    Grid1D grid;
    std::vector<double> t_slices;             // strictly increasing
    std::vector<std::vector<double>> values;  // [slice][ix * npairs + p]

    std::size_t npairs() const { return pairs.npairs(); }

    double& at(std::size_t slice, std::size_t ix, std::size_t p) {
        return values[slice][ix * npairs() + p];
    }
    double at(std::size_t slice, std::size_t ix, std::size_t p) const {
        return values[slice][ix * npairs() + p];
    }

    double t_min() const { return t_slices.front(); }
    double t_max() const { return t_slices.back(); }

    // Sup of the values over a slice, cone pairs only.
    double slice_sup(std::size_t slice) const {
        double m = 0.0;
        for (std::size_t ix = 0; ix < grid.n; ++ix) {
            for (std::size_t p = 0; p < npairs(); ++p) {
                if (pairs.in_cone_[p] && at(slice, ix, p) > m) m = at(slice, ix, p);
            }
        }
        return m;
    }

    // Inf of the values over a slice, cone pairs only.
    double slice_inf_on_cone(std::size_t slice) const {
        double m = std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t ix = 0; ix < grid.n; ++ix) {
            for (std::size_t p = 0; p < npairs(); ++p) {
                if (pairs.in_cone_[p]) {
                    any = true;
                    if (at(slice, ix, p) < m) m = at(slice, ix, p);
                }
            }
        }
        return any ? m : 0.0;
    }

    double M0() const { return slice_sup(0); }

    // Shape, positivity and support checks. Values must be finite and
    // nonnegative everywhere and exactly zero on pairs outside the cone.
    void validate() const {
        if (marks.size() < 2) throw std::invalid_argument("kernel: needs at least two marks");
        if (!(V_inf > 0.0)) throw std::invalid_argument("kernel: V_inf must be positive");
        if (grid.n < 2 || !(grid.dx > 0.0)) {
            throw std::invalid_argument("kernel: grid needs n >= 2 nodes and dx > 0");
        }
        if (t_slices.empty()) throw std::invalid_argument("kernel: no time slices");
        for (std::size_t s = 1; s < t_slices.size(); ++s) {
            if (!(t_slices[s] > t_slices[s - 1])) {
                throw std::invalid_argument("kernel: time slices must be increasing");
            }
        }
        if (values.size() != t_slices.size()) {
            throw std::invalid_argument("kernel: slice count mismatch");
        }
        const std::size_t expect = grid.n * npairs();
        for (std::size_t s = 0; s < values.size(); ++s) {
            if (values[s].size() != expect) {
                throw std::invalid_argument("kernel: slice " + std::to_string(s) +
                                            " has wrong value count");
            }
            for (std::size_t ix = 0; ix < grid.n; ++ix) {
                for (std::size_t p = 0; p < npairs(); ++p) {
                    const double v = at(s, ix, p);
                    if (!std::isfinite(v) || v < 0.0) {
                        throw std::invalid_argument("kernel: values must be finite and >= 0");
                    }
                    if (!pairs.in_cone_[p] && v != 0.0) {
                        throw std::invalid_argument(
                            "kernel: nonzero value on pair outside the velocity cone");
                    }
                }
            }
        }
    }

    TimeLocate locate_t(double t) const { return locate_time(t_slices, t); }
};

// Bilinear pointwise evaluation f(x, t, atoms[i], atoms[j]) for an ordered
// pair i < j. Out-of-cone pairs are identically zero; out-of-grid x or t is
// a range error.
inline double kernel_eval(const Kernel& k, double x, double t, std::size_t i, std::size_t j) {
    const std::size_t p = k.pairs.index(i, j);
    if (!k.pairs.in_cone_[p]) return 0.0;
    const auto lx = k.grid.locate(x);
    const auto lt = k.locate_t(t);
    auto at_slice = [&](std::size_t s) {
        return (1.0 - lx.frac) * k.at(s, lx.i, p) + lx.frac * k.at(s, lx.i + 1, p);
    };
    if (k.t_slices.size() == 1) return at_slice(0);
    return (1.0 - lt.frac) * at_slice(lt.s) + lt.frac * at_slice(lt.s + 1);
}

inline double kernel_eval(const Kernel& k, double x, double t, const Mark& a, const Mark& b) {
    const std::size_t i = k.marks.index_of(a);
    const std::size_t j = k.marks.index_of(b);
    if (i == MarkSet::npos || j == MarkSet::npos) {
        throw std::invalid_argument("kernel_eval: mark is not an atom of the mark set");
    }
    if (!precedes(k.marks.mark(i), k.marks.mark(j))) {
        throw std::invalid_argument("kernel_eval: requires an ordered pair a ≺ b");
    }
    return kernel_eval(k, x, t, i, j);
}

// Single-mark marginal density field m(x, t, rho), stored nodally like a
// kernel but indexed per mark instead of per ordered pair:
// values[slice][ix * nmarks + mark]. Used for the boundary-law marginal and
// as the output of the forward solvers. `floor` records the smallest value
// attained during construction (a positivity certificate).
struct MarginalField {
    MarkSet marks;
    double V_inf = 0.0;
    Grid1D grid;
    std::vector<double> t_slices;
    std::vector<std::vector<double>> values;  // [slice][ix * nmarks + mark]
    double floor = 0.0;

    std::size_t nmarks() const { return marks.size(); }

    double& at(std::size_t slice, std::size_t ix, std::size_t m) {
        return values[slice][ix * nmarks() + m];
    }
    double at(std::size_t slice, std::size_t ix, std::size_t m) const {
        return values[slice][ix * nmarks() + m];
    }

    double t_min() const { return t_slices.front(); }
    double t_max() const { return t_slices.back(); }

    void validate() const {
        if (marks.size() == 0) throw std::invalid_argument("marginal field: no marks");
        if (grid.n < 2 || !(grid.dx > 0.0)) {
            throw std::invalid_argument("marginal field: grid needs n >= 2 nodes and dx > 0");
        }
        if (t_slices.empty()) throw std::invalid_argument("marginal field: no time slices");
        for (std::size_t s = 1; s < t_slices.size(); ++s) {
            if (!(t_slices[s] > t_slices[s - 1])) {
                throw std::invalid_argument("marginal field: time slices must be increasing");
            }
        }
        if (values.size() != t_slices.size()) {
            throw std::invalid_argument("marginal field: slice count mismatch");
        }
        for (const auto& slice : values) {
            if (slice.size() != grid.n * nmarks()) {
                throw std::invalid_argument("marginal field: slice has wrong value count");
            }
            for (double v : slice) {
                if (!std::isfinite(v) || v < 0.0) {
                    throw std::invalid_argument("marginal field: values must be finite and >= 0");
                }
            }
        }
    }

    TimeLocate locate_t(double t) const { return locate_time(t_slices, t); }
};

// Bilinear pointwise evaluation of a marginal field at (x, t) for mark m.
inline double marginal_eval(const MarginalField& f, double x, double t, std::size_t m) {
    const auto lx = f.grid.locate(x);
    const auto lt = f.locate_t(t);
    auto at_slice = [&](std::size_t s) {
        return (1.0 - lx.frac) * f.at(s, lx.i, m) + lx.frac * f.at(s, lx.i + 1, m);
    };
    if (f.t_slices.size() == 1) return at_slice(0);
    return (1.0 - lt.frac) * at_slice(lt.s) + lt.frac * at_slice(lt.s + 1);
}

}  // namespace gibbstess
