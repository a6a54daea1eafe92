#pragma once

// Symmetry transforms of kernel solutions: direction reversal, coordinate
// swap, and slope shear.
//
// Reversal: running the jump process backward in x gives a Markov process
// with rate fhat(x, b, a) = (l(x,a)/l(x,b)) f(x, a, b), where l is the
// one-point marginal. Composing with the reflection (x,t) -> (-x,-t) yields
// a kernel that again satisfies the kinetic equation — in the mark system
// negated through rho -> -rho, where the order reverses and every chord
// slope is preserved, so the standard residual applies verbatim.
//
// Swap: reflecting the generating convex function through
// (x1,x2) -> (-x2,-x1) exchanges the roles of space and time. The
// transformed marks are rho -> (-rho2,-rho1), chord slopes become their
// reciprocals, and the swapped kernel
//     fbar(x1, x2, .) = (l ratio) * alpha * f(-x2, -x1, .)
// satisfies the kinetic equation with its own (reciprocal) bracket table.
// This requires the support to stay away from horizontal chords: every pair
// carrying mass must have alpha >= alpha_min.
//
// Shear: pushing marks through T_c(rho1,rho2) = (rho1, rho2 + c rho1) and
// space through S_c(x1,x2) = (x1 + c x2, x2) shifts every chord slope by c,
// mapping general supports into the positive-slope regime.
//
// Reversal and swap take the companion marginal l on the box of interest —
// any node-aligned sub-box of the kernel's grid (matching spacing, matching
// slice times). The transformed kernel is the transform of f restricted to
// that box.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernel.hpp"
#include "marks.hpp"

namespace gibbstess {

namespace detail {

// Node-alignment of a marginal's box inside the kernel's grid: the x offset
// in whole nodes and, per marginal slice, the kernel slice with the same
// time.
struct BoxAlign {
    std::size_t x_off = 0;
    std::vector<std::size_t> slice_of;
};

inline BoxAlign align_box(const Kernel& f, const MarginalField& ell, const char* who) {
    if (ell.marks.size() != f.marks.size()) {
        throw std::invalid_argument(std::string(who) + ": mark count mismatch");
    }
    const double dx = f.grid.dx;
    if (std::abs(ell.grid.dx - dx) > 1e-12 * dx) {
        throw std::invalid_argument(std::string(who) + ": grid spacing mismatch");
    }
    const double s = (ell.grid.x0 - f.grid.x0) / dx;
    const double r = std::round(s);
    if (std::abs(s - r) > 1e-9 || r < 0.0 ||
        static_cast<std::size_t>(r) + ell.grid.n > f.grid.n) {
        throw std::invalid_argument(std::string(who) +
                                    ": marginal grid is not node-aligned inside the kernel grid");
    }
    BoxAlign a;
    a.x_off = static_cast<std::size_t>(r);
    const double span = f.t_max() - f.t_min();
    const double ttol = 1e-9 * (span > 0.0 ? span : 1.0);
    std::size_t k = 0;
    for (double t : ell.t_slices) {
        while (k < f.t_slices.size() && f.t_slices[k] < t - ttol) ++k;
        if (k >= f.t_slices.size() || std::abs(f.t_slices[k] - t) > ttol) {
            throw std::invalid_argument(std::string(who) +
                                        ": marginal slice times must match kernel slices");
        }
        a.slice_of.push_back(k);
    }
    return a;
}

inline double guarded_ratio(double num, double den, double min_ell, const char* who) {
    if (!(num >= min_ell) || !(den >= min_ell)) {
        throw std::runtime_error(std::string(who) + ": marginal below the positivity guard " +
                                 std::to_string(min_ell));
    }
    return num / den;
}

// Atoms negated through rho -> -rho: order reverses (index i -> m-1-i), all
// chord slopes are preserved.
inline MarkSet negate_marks(const MarkSet& ms) {
    std::vector<Mark> atoms;
    std::vector<double> weights;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        atoms.push_back(Mark{-ms.mark(i).rho1, -ms.mark(i).rho2});
        weights.push_back(ms.weight(i));
    }
    return make_mark_set(std::move(atoms), std::move(weights), -ms.P_hi, -ms.P_lo, ms.graph);
}

// Atoms mapped through rho -> (-rho2, -rho1): requires strictly increasing
// rho2 so the image has distinct first components; order reverses and chord
// slopes become reciprocals.
inline MarkSet swap_negate_marks(const MarkSet& ms) {
    for (std::size_t i = 1; i < ms.size(); ++i) {
        if (!(ms.mark(i).rho2 > ms.mark(i - 1).rho2)) {
            throw std::invalid_argument("swap_kernel: marks must have strictly increasing rho2");
        }
    }
    std::vector<Mark> atoms;
    std::vector<double> weights;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        atoms.push_back(Mark{-ms.mark(i).rho2, -ms.mark(i).rho1});
        weights.push_back(ms.weight(i));
    }
    return make_mark_set(std::move(atoms), std::move(weights), -ms.P_hi, -ms.P_lo, ms.graph);
}

// Uniform slice spacing, required to re-index slices as a grid axis.
inline double uniform_dt(const std::vector<double>& ts, const char* who) {
    if (ts.size() < 2) throw std::invalid_argument(std::string(who) + ": needs >= 2 slices");
    const double dt = ts[1] - ts[0];
    const double span = ts.back() - ts.front();
    for (std::size_t s = 1; s < ts.size(); ++s) {
        if (std::abs(ts[s] - ts[0] - static_cast<double>(s) * dt) > 1e-9 * span) {
            throw std::invalid_argument(std::string(who) + ": slice times must be uniform");
        }
    }
    return dt;
}

}  // namespace detail

// Reversed-direction kernel on the marginal's box. With reflect = true (the
// default) this is the kernel of the process x -> rho(-x): values are
// transported to the negated grid and slice times, and the result satisfies
// the kinetic equation in the negated mark system. With reflect = false only
// the l-ratio reweighting and pair transposition are applied (the plain
// backward jump rate).
inline Kernel reverse_kernel(const Kernel& f, const MarginalField& ell, bool reflect = true,
                             double min_ell = 1e-12) {
    f.validate();
    ell.validate();
    const auto box = detail::align_box(f, ell, "reverse_kernel");

    const std::size_t m = f.marks.size();
    const std::size_t np = f.npairs();
    const std::size_t nx = ell.grid.n;
    const std::size_t nt = ell.t_slices.size();

    Kernel out;
    out.marks = detail::negate_marks(f.marks);
    out.V_inf = f.V_inf;
    out.pairs = PairTable::build(out.marks, out.V_inf);
    if (reflect) {
        out.grid = Grid1D{-ell.grid.x_max(), ell.grid.dx, nx};
        for (std::size_t s = 0; s < nt; ++s) out.t_slices.push_back(-ell.t_slices[nt - 1 - s]);
    } else {
        out.grid = ell.grid;
        out.t_slices = ell.t_slices;
    }
    out.values.assign(nt, std::vector<double>(nx * np, 0.0));

    for (std::size_t s = 0; s < nt; ++s) {
        const std::size_t s_out = reflect ? nt - 1 - s : s;
        const std::size_t s_f = box.slice_of[s];
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const std::size_t ix_out = reflect ? nx - 1 - ix : ix;
            const std::size_t ix_f = box.x_off + ix;
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = i + 1; j < m; ++j) {
                    const double v = f.at(s_f, ix_f, f.pairs.index(i, j));
                    if (v == 0.0) continue;
                    const double ratio = detail::guarded_ratio(
                        ell.at(s, ix, i), ell.at(s, ix, j), min_ell, "reverse_kernel");
                    out.at(s_out, ix_out, out.pairs.index(m - 1 - j, m - 1 - i)) = ratio * v;
                }
            }
        }
    }
    out.delta0 = out.slice_inf_on_cone(0);
    out.validate();
    return out;
}

// Marginal of the reversed system: the law of the state at the reflected
// point, carried to the negated marks.
inline MarginalField reverse_marginal(const MarginalField& ell, bool reflect = true) {
    ell.validate();
    const std::size_t m = ell.marks.size();
    const std::size_t nx = ell.grid.n;
    const std::size_t nt = ell.t_slices.size();

    MarginalField out;
    out.marks = detail::negate_marks(ell.marks);
    out.V_inf = ell.V_inf;
    if (reflect) {
        out.grid = Grid1D{-ell.grid.x_max(), ell.grid.dx, nx};
        for (std::size_t s = 0; s < nt; ++s) out.t_slices.push_back(-ell.t_slices[nt - 1 - s]);
    } else {
        out.grid = ell.grid;
        out.t_slices = ell.t_slices;
    }
    out.values.assign(nt, std::vector<double>(nx * m, 0.0));
    for (std::size_t s = 0; s < nt; ++s) {
        const std::size_t s_out = reflect ? nt - 1 - s : s;
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const std::size_t ix_out = reflect ? nx - 1 - ix : ix;
            for (std::size_t i = 0; i < m; ++i) {
                out.at(s_out, ix_out, m - 1 - i) = ell.at(s, ix, i);
            }
        }
    }
    out.floor = ell.floor;
    return out;
}

// Coordinate-swapped kernel on the marginal's box: exchanges the grid and
// slice axes through (x1,x2) -> (-x2,-x1), maps marks through
// rho -> (-rho2,-rho1), and weights each value by the l-ratio and the chord
// slope. Every pair carrying mass on the box must satisfy alpha >= alpha_min.
// The output satisfies the kinetic equation with its own bracket table (the
// reciprocal slopes).
inline Kernel swap_kernel(const Kernel& f, const MarginalField& ell, double alpha_min = 1e-3,
                          double min_ell = 1e-12) {
    f.validate();
    ell.validate();
    const auto box = detail::align_box(f, ell, "swap_kernel");

    const std::size_t m = f.marks.size();
    const std::size_t np = f.npairs();
    const std::size_t nx = ell.grid.n;
    const std::size_t nt = ell.t_slices.size();
    const double dt = detail::uniform_dt(ell.t_slices, "swap_kernel");

    // Support condition on the box, and the velocity bound of the swapped
    // system (reciprocals of the support slopes).
    double Vbar = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
        bool mass = false;
        for (std::size_t s = 0; s < nt && !mass; ++s) {
            for (std::size_t ix = 0; ix < nx; ++ix) {
                if (f.at(box.slice_of[s], box.x_off + ix, p) != 0.0) {
                    mass = true;
                    break;
                }
            }
        }
        if (!mass) continue;
        if (f.pairs.alpha_[p] < alpha_min) {
            throw std::invalid_argument(
                "swap_kernel: support pair with alpha < alpha_min (alpha = " +
                std::to_string(f.pairs.alpha_[p]) + ")");
        }
        Vbar = std::max(Vbar, 1.0 / f.pairs.alpha_[p]);
    }
    if (Vbar == 0.0) throw std::invalid_argument("swap_kernel: kernel vanishes on the box");

    Kernel out;
    out.marks = detail::swap_negate_marks(f.marks);
    out.V_inf = Vbar;
    out.pairs = PairTable::build(out.marks, out.V_inf);
    // New grid axis = negated old slice axis; new slice axis = negated old grid.
    out.grid = Grid1D{-ell.t_slices.back(), dt, nt};
    for (std::size_t s = 0; s < nx; ++s) {
        out.t_slices.push_back(-ell.grid.x_at(nx - 1 - s));
    }
    out.values.assign(nx, std::vector<double>(nt * np, 0.0));

    for (std::size_t s_out = 0; s_out < nx; ++s_out) {
        const std::size_t ix = nx - 1 - s_out;  // marginal node feeding this output slice
        for (std::size_t ix_out = 0; ix_out < nt; ++ix_out) {
            const std::size_t s = nt - 1 - ix_out;  // marginal slice feeding this output node
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = i + 1; j < m; ++j) {
                    const double v = f.at(box.slice_of[s], box.x_off + ix, f.pairs.index(i, j));
                    if (v == 0.0) continue;
                    const double ratio = detail::guarded_ratio(
                        ell.at(s, ix, i), ell.at(s, ix, j), min_ell, "swap_kernel");
                    out.values[s_out][ix_out * np + out.pairs.index(m - 1 - j, m - 1 - i)] =
                        ratio * f.pairs.alpha_of(i, j) * v;
                }
            }
        }
    }
    out.delta0 = out.slice_inf_on_cone(0);
    out.validate();
    return out;
}

// Marginal of the swapped system, on the swapped marks and axes.
inline MarginalField swap_marginal(const MarginalField& ell) {
    ell.validate();
    const std::size_t m = ell.marks.size();
    const std::size_t nx = ell.grid.n;
    const std::size_t nt = ell.t_slices.size();
    const double dt = detail::uniform_dt(ell.t_slices, "swap_marginal");

    MarginalField out;
    out.marks = detail::swap_negate_marks(ell.marks);
    out.V_inf = ell.V_inf;
    out.grid = Grid1D{-ell.t_slices.back(), dt, nt};
    for (std::size_t s = 0; s < nx; ++s) out.t_slices.push_back(-ell.grid.x_at(nx - 1 - s));
    out.values.assign(nx, std::vector<double>(nt * m, 0.0));
    for (std::size_t s_out = 0; s_out < nx; ++s_out) {
        const std::size_t ix = nx - 1 - s_out;
        for (std::size_t ix_out = 0; ix_out < nt; ++ix_out) {
            const std::size_t s = nt - 1 - ix_out;
            for (std::size_t i = 0; i < m; ++i) {
                out.at(s_out, ix_out, m - 1 - i) = ell.at(s, ix, i);
            }
        }
    }
    out.floor = ell.floor;
    return out;
}

// Shear pushforward: marks through T_c, space through S_c. Chord slopes
// shift by c; per slice the values are gathered at x - c t with clamped
// linear interpolation (exact for x-independent data).
inline Kernel shear_pushforward(const Kernel& f, double c) {
    f.validate();
    const std::size_t m = f.marks.size();
    const std::size_t np = f.npairs();
    const std::size_t nx = f.grid.n;

    std::vector<Mark> atoms;
    std::vector<double> weights;
    double lo = f.marks.P_lo, hi = f.marks.P_hi;
    bool graph = f.marks.graph;
    for (std::size_t i = 0; i < m; ++i) {
        const Mark& a = f.marks.mark(i);
        const Mark b{a.rho1, a.rho2 + c * a.rho1};
        atoms.push_back(b);
        weights.push_back(f.marks.weight(i));
        lo = std::min({lo, b.rho1, b.rho2});
        hi = std::max({hi, b.rho1, b.rho2});
        if (i > 0 && graph && !(atoms[i].rho2 > atoms[i - 1].rho2)) graph = false;
    }

    Kernel out;
    out.marks = make_mark_set(std::move(atoms), std::move(weights), lo, hi, graph);
    out.V_inf = f.V_inf + std::abs(c);
    out.delta0 = f.delta0;
    out.pairs = PairTable::build(out.marks, out.V_inf);
    out.grid = f.grid;
    out.t_slices = f.t_slices;
    out.values.assign(f.values.size(), std::vector<double>(nx * np, 0.0));

    for (std::size_t s = 0; s < f.values.size(); ++s) {
        const double shift = c * f.t_slices[s];
        for (std::size_t p = 0; p < np; ++p) {
            for (std::size_t ix = 0; ix < nx; ++ix) {
                // f'(x, t) = f(x - c t, t); atom order is preserved by T_c.
                const double x_src = f.grid.x_at(ix) - shift;
                double v;
                if (x_src <= f.grid.x0) {
                    v = f.values[s][p];
                } else if (x_src >= f.grid.x_max()) {
                    v = f.values[s][(nx - 1) * np + p];
                } else {
                    const double pos = (x_src - f.grid.x0) / f.grid.dx;
                    std::size_t i0 = static_cast<std::size_t>(pos);
                    if (i0 >= nx - 1) i0 = nx - 2;
                    const double frac = pos - static_cast<double>(i0);
                    v = (1.0 - frac) * f.values[s][i0 * np + p] +
                        frac * f.values[s][(i0 + 1) * np + p];
                }
                out.values[s][ix * np + p] = v;
            }
        }
    }
    out.validate();
    return out;
}

// Shear of a marginal field (same spatial gather, marks through T_c).
inline MarginalField shear_marginal(const MarginalField& ell, double c) {
    ell.validate();
    const std::size_t m = ell.marks.size();
    const std::size_t nx = ell.grid.n;

    std::vector<Mark> atoms;
    std::vector<double> weights;
    double lo = ell.marks.P_lo, hi = ell.marks.P_hi;
    bool graph = ell.marks.graph;
    for (std::size_t i = 0; i < m; ++i) {
        const Mark& a = ell.marks.mark(i);
        const Mark b{a.rho1, a.rho2 + c * a.rho1};
        atoms.push_back(b);
        weights.push_back(ell.marks.weight(i));
        lo = std::min({lo, b.rho1, b.rho2});
        hi = std::max({hi, b.rho1, b.rho2});
        if (i > 0 && graph && !(atoms[i].rho2 > atoms[i - 1].rho2)) graph = false;
    }

    MarginalField out;
    out.marks = make_mark_set(std::move(atoms), std::move(weights), lo, hi, graph);
    out.V_inf = ell.V_inf + std::abs(c);
    out.grid = ell.grid;
    out.t_slices = ell.t_slices;
    out.floor = ell.floor;
    out.values.assign(ell.values.size(), std::vector<double>(nx * m, 0.0));
    for (std::size_t s = 0; s < ell.values.size(); ++s) {
        const double shift = c * ell.t_slices[s];
        for (std::size_t k = 0; k < m; ++k) {
            for (std::size_t ix = 0; ix < nx; ++ix) {
                const double x_src = ell.grid.x_at(ix) - shift;
                double v;
                if (x_src <= ell.grid.x0) {
                    v = ell.values[s][k];
                } else if (x_src >= ell.grid.x_max()) {
                    v = ell.values[s][(nx - 1) * m + k];
                } else {
                    const double pos = (x_src - ell.grid.x0) / ell.grid.dx;
                    std::size_t i0 = static_cast<std::size_t>(pos);
                    if (i0 >= nx - 1) i0 = nx - 2;
                    const double frac = pos - static_cast<double>(i0);
                    v = (1.0 - frac) * ell.values[s][i0 * m + k] +
                        frac * ell.values[s][(i0 + 1) * m + k];
                }
                out.values[s][ix * m + k] = v;
            }
        }
    }
    return out;
}

}  // namespace gibbstess
