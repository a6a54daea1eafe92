#pragma once

// Forward (Kolmogorov) solvers for the one-point marginal l(x, t, rho) of
// the mark process, driven by a pair kernel f:
//
//   along x:  l_x = l*f - lambda l      (jump rates f(x, t, a, b))
//   along t:  l_t = l*(alpha f) - A l   (jump rates alpha(a,b) f(x, t, a, b))
//
// Both are explicit first-order polygonal schemes whose update telescopes in
// the beta-mass, so total mass is conserved to rounding at every step.
//
// The t-direction rates alpha*f can be negative; positivity is recovered by
// tilting: with f~(x,t) = f(x + shift (t - t0), t) the tilted marginal
// l~(x,t) = l(x + shift (t - t0), t) satisfies the same pair of equations
// with rates (alpha + shift) f~, all nonnegative once shift >= V_inf. The
// box construction runs (1) an x-sweep at the initial time, extended
// backward far enough to cover the tilt, (2) a tilted time evolution up the
// left edge, (3) a tilted x-sweep per time slice, and (4) the un-tilt
// l(x,t) = l~(x - shift (t - t0), t).
//
// Kernel lookups outside the stored grid or slice range clamp to the edge
// (constant extrapolation), matching the kinetic solver's boundary handling;
// callers are expected to provide kernels padded by V_inf * T around the box
// of interest.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernel.hpp"
#include "kinetic.hpp"
#include "marks.hpp"

namespace gibbstess {

namespace detail {

// All pair values of f at (x, t), clamped to the grid and slice range.
inline void eval_pairs_clamped(const Kernel& f, double x, double t, std::vector<double>& out) {
    const std::size_t np = f.npairs();
    out.assign(np, 0.0);
    double xc = std::min(std::max(x, f.grid.x0), f.grid.x_max());
    double tc = std::min(std::max(t, f.t_min()), f.t_max());
    const auto lx = f.grid.locate(xc);
    if (f.t_slices.size() == 1) {
        for (std::size_t p = 0; p < np; ++p) {
            out[p] = (1.0 - lx.frac) * f.at(0, lx.i, p) + lx.frac * f.at(0, lx.i + 1, p);
        }
        return;
    }
    const auto lt = f.locate_t(tc);
    for (std::size_t p = 0; p < np; ++p) {
        const double lo = (1.0 - lx.frac) * f.at(lt.s, lx.i, p) + lx.frac * f.at(lt.s, lx.i + 1, p);
        const double hi =
            (1.0 - lx.frac) * f.at(lt.s + 1, lx.i, p) + lx.frac * f.at(lt.s + 1, lx.i + 1, p);
        out[p] = (1.0 - lt.frac) * lo + lt.frac * hi;
    }
}

// One explicit Euler step of the jump forward equation with per-pair rates:
// ell'(b) += h * r(a,b) ell(a) w(a), ell'(a) -= h * r(a,b) w(b) ell(a).
// The beta-mass of the update telescopes pair by pair.
inline void forward_step(const MarkSet& ms, const std::vector<double>& rates,
                         std::vector<double>& ell, double h, const char* who,
                         const std::string& where) {
    const std::size_t m = ms.size();
    std::size_t p = 0;
    std::vector<double> delta(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j, ++p) {
            const double flux = rates[p] * ell[i];
            if (flux == 0.0) continue;
            delta[j] += flux * ms.weight(i);
            delta[i] -= flux * ms.weight(j);
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        ell[i] += h * delta[i];
        if (ell[i] < 0.0) {
            throw std::runtime_error(std::string(who) + ": positivity lost at " + where);
        }
    }
}

// Dense m x m solve with partial pivoting (A row-major, consumed in place).
inline std::vector<double> solve_linear(std::vector<double> A, std::vector<double> b,
                                        const char* who) {
    const std::size_t m = b.size();
    for (std::size_t c = 0; c < m; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < m; ++r) {
            if (std::abs(A[r * m + c]) > std::abs(A[piv * m + c])) piv = r;
        }
        if (std::abs(A[piv * m + c]) < 1e-300) {
            throw std::runtime_error(std::string(who) + ": singular transition matrix");
        }
        if (piv != c) {
            for (std::size_t k = 0; k < m; ++k) std::swap(A[c * m + k], A[piv * m + k]);
            std::swap(b[c], b[piv]);
        }
        for (std::size_t r = c + 1; r < m; ++r) {
            const double fac = A[r * m + c] / A[c * m + c];
            if (fac == 0.0) continue;
            for (std::size_t k = c; k < m; ++k) A[r * m + k] -= fac * A[c * m + k];
            b[r] -= fac * b[c];
        }
    }
    std::vector<double> x(m, 0.0);
    for (std::size_t r = m; r-- > 0;) {
        double acc = b[r];
        for (std::size_t k = r + 1; k < m; ++k) acc -= A[r * m + k] * x[k];
        x[r] = acc / A[r * m + r];
    }
    return x;
}

inline void check_initial_law(const MarkSet& ms, const std::vector<double>& ell0,
                              const char* who) {
    if (ell0.size() != ms.size()) {
        throw std::invalid_argument(std::string(who) + ": initial law needs one value per mark");
    }
    double mass = 0.0;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        if (!(ell0[i] >= 0.0)) {
            throw std::invalid_argument(std::string(who) + ": initial law must be nonnegative");
        }
        mass += ell0[i] * ms.weight(i);
    }
    if (std::abs(mass - 1.0) > 1e-8) {
        throw std::invalid_argument(std::string(who) + ": initial law must have beta-mass 1 (got " +
                                    std::to_string(mass) + ")");
    }
}

// Sup of |f| over all stored slices, cone pairs only.
inline double global_sup(const Kernel& f) {
    double s = 0.0;
    for (std::size_t k = 0; k < f.values.size(); ++k) s = std::max(s, f.slice_sup(k));
    return s;
}

// True when every pair carrying mass anywhere in f has alpha >= 0.
inline bool plus_supported(const Kernel& f) {
    for (std::size_t p = 0; p < f.npairs(); ++p) {
        if (f.pairs.alpha_[p] >= 0.0) continue;
        for (const auto& slice : f.values) {
            for (std::size_t ix = 0; ix < f.grid.n; ++ix) {
                if (slice[ix * f.npairs() + p] != 0.0) return false;
            }
        }
    }
    return true;
}

}  // namespace detail

// March l along x at fixed time t, from x_from to x_to (either direction),
// with n explicit Euler steps. Returns n+1 rows of per-mark values, ordered
// from x_from to x_to. The step must satisfy |h| <= 1/M0 (sup of f), the
// stability condition of the polygonal scheme.
inline std::vector<std::vector<double>> solve_ell_x(const Kernel& f,
                                                    const std::vector<double>& ell0, double t,
                                                    double x_from, double x_to, std::size_t n) {
    f.validate();
    detail::check_initial_law(f.marks, ell0, "solve_ell_x");
    if (n == 0) throw std::invalid_argument("solve_ell_x: needs at least one step");
    if (x_to == x_from) throw std::invalid_argument("solve_ell_x: empty span");
    const double h = (x_to - x_from) / static_cast<double>(n);
    const double M0 = detail::global_sup(f);
    if (M0 > 0.0 && std::abs(h) > 1.0 / M0) {
        throw std::invalid_argument("solve_ell_x: step " + std::to_string(std::abs(h)) +
                                    " exceeds the stability bound 1/M0 = " +
                                    std::to_string(1.0 / M0));
    }

    std::vector<std::vector<double>> out;
    out.reserve(n + 1);
    out.push_back(ell0);
    std::vector<double> cur = ell0;
    std::vector<double> rates;
    for (std::size_t k = 0; k < n; ++k) {
        const double x = x_from + static_cast<double>(k) * h;
        detail::eval_pairs_clamped(f, x, t, rates);
        detail::forward_step(f.marks, rates, cur, h, "solve_ell_x",
                             "x = " + std::to_string(x + h));
        out.push_back(cur);
    }
    return out;
}

// March l along t at fixed tilted abscissa x, from t_from to t_to (forward),
// with n explicit Euler steps and rates (alpha + shift) f~ where
// f~(x, t) = f(x + shift (t - t_from), t). With shift = 0 this is the plain
// equation at a fixed lab point; with shift = V_inf every rate is
// nonnegative. Any mass-carrying pair with alpha + shift < 0 is rejected.
inline std::vector<std::vector<double>> solve_ell_t(const Kernel& f,
                                                    const std::vector<double>& ell0, double x,
                                                    double t_from, double t_to, std::size_t n,
                                                    double shift) {
    f.validate();
    detail::check_initial_law(f.marks, ell0, "solve_ell_t");
    if (n == 0) throw std::invalid_argument("solve_ell_t: needs at least one step");
    if (!(t_to > t_from)) throw std::invalid_argument("solve_ell_t: needs t_to > t_from");

    const std::size_t np = f.npairs();
    for (std::size_t p = 0; p < np; ++p) {
        if (f.pairs.alpha_[p] + shift >= 0.0) continue;
        for (const auto& slice : f.values) {
            for (std::size_t ix = 0; ix < f.grid.n; ++ix) {
                if (slice[ix * np + p] != 0.0) {
                    throw std::invalid_argument(
                        "solve_ell_t: effective rate negative on a support pair (alpha = " +
                        std::to_string(f.pairs.alpha_[p]) + ", shift = " + std::to_string(shift) +
                        ")");
                }
            }
        }
    }

    const double h = (t_to - t_from) / static_cast<double>(n);
    const double rate_sup = (f.V_inf + std::max(shift, 0.0)) * detail::global_sup(f);
    if (rate_sup > 0.0 && h > 1.0 / rate_sup) {
        throw std::invalid_argument("solve_ell_t: step " + std::to_string(h) +
                                    " exceeds the stability bound " +
                                    std::to_string(1.0 / rate_sup));
    }

    std::vector<std::vector<double>> out;
    out.reserve(n + 1);
    out.push_back(ell0);
    std::vector<double> cur = ell0;
    std::vector<double> raw, rates(np, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = t_from + static_cast<double>(k) * h;
        detail::eval_pairs_clamped(f, x + shift * (t - t_from), t, raw);
        for (std::size_t p = 0; p < np; ++p) {
            rates[p] = (f.pairs.alpha_[p] + shift) * raw[p];
        }
        detail::forward_step(f.marks, rates, cur, h, "solve_ell_t",
                             "t = " + std::to_string(t + h));
        out.push_back(cur);
    }
    return out;
}

// Staged construction of the marginal on the box [a_minus, a_plus] x
// [t0, t0 + T], co-gridded with f: the box edges must lie on kernel grid
// nodes and t0 + T on a stored slice time. Positivity needs one of two
// hypotheses: every mass-carrying pair has alpha >= 0 (no tilt needed), or
// inf ell0 >= 1/6 with the tilt budget M0 V_inf T <= 1/12 (the backward
// x-extension then stays above 1/12). The returned field reports the
// smallest value attained as `floor` and has beta-mass 1 at every node.
// x_substeps / t_substeps override the automatic refinement of each kernel
// cell / slice gap when positive.
inline MarginalField build_ell_box(const Kernel& f, const std::vector<double>& ell0,
                                   double a_minus, double a_plus, double T,
                                   std::size_t x_substeps = 0, std::size_t t_substeps = 0) {
    f.validate();
    detail::check_initial_law(f.marks, ell0, "build_ell_box");
    if (!(T > 0.0)) throw std::invalid_argument("build_ell_box: needs T > 0");
    if (!(a_plus > a_minus)) throw std::invalid_argument("build_ell_box: needs a_plus > a_minus");

    const std::size_t m = f.marks.size();
    const std::size_t np = f.npairs();
    const double dx = f.grid.dx;

    // Box edges on grid nodes.
    auto node_at = [&](double a, const char* name) {
        const double s = (a - f.grid.x0) / dx;
        const double r = std::round(s);
        if (std::abs(s - r) > 1e-9 || r < 0.0 || r > static_cast<double>(f.grid.n - 1)) {
            throw std::invalid_argument(std::string("build_ell_box: ") + name +
                                        " must lie on a kernel grid node");
        }
        return static_cast<std::size_t>(r);
    };
    const std::size_t ia_lo = node_at(a_minus, "a_minus");
    const std::size_t ia_hi = node_at(a_plus, "a_plus");
    if (ia_hi <= ia_lo) throw std::invalid_argument("build_ell_box: empty node range");

    // T must land on a stored slice.
    const double t0 = f.t_min();
    const double span = f.t_max() - t0;
    const double ttol = 1e-9 * (span > 0.0 ? span : 1.0);
    std::size_t s_hi = 0;
    {
        bool found = false;
        for (std::size_t s = 0; s < f.t_slices.size(); ++s) {
            if (std::abs(f.t_slices[s] - (t0 + T)) <= ttol) {
                s_hi = s;
                found = true;
                break;
            }
        }
        if (!found || s_hi == 0) {
            throw std::invalid_argument("build_ell_box: t0 + T must equal a stored slice time");
        }
    }

    // Positivity hypothesis: plus-supported kernel, or inf ell0 >= 1/6 with
    // the tilt budget that keeps the backward sweep above 1/12.
    const bool plus = detail::plus_supported(f);
    const double shift = plus ? 0.0 : f.V_inf;
    const double c0 = *std::min_element(ell0.begin(), ell0.end());
    const double M0 = f.M0();
    if (!plus) {
        if (c0 < 1.0 / 6.0 - 1e-12) {
            throw std::invalid_argument(
                "build_ell_box: kernel support has negative slopes and inf ell0 = " +
                std::to_string(c0) + " < 1/6; neither positivity hypothesis holds");
        }
        if (M0 * f.V_inf * T > (1.0 / 12.0) * (1.0 + 1e-9)) {
            throw std::invalid_argument(
                "build_ell_box: tilt budget exceeded: M0 * V_inf * T = " +
                std::to_string(M0 * f.V_inf * T) + " > 1/12");
        }
    }

    // Substep resolution: the stability bound for each sweep direction plus
    // the scheme defaults (cell size <= min(1/(4 M0), T*/50) when defined).
    const double Ms = detail::global_sup(f);
    const double W = f.marks.total_mass();
    double target_x = std::numeric_limits<double>::infinity();
    double target_t = std::numeric_limits<double>::infinity();
    if (Ms > 0.0) {
        target_x = std::min(target_x, 0.9 / (Ms * std::max(W, 1.0)));
        if (M0 > 0.0) target_x = std::min(target_x, 1.0 / (4.0 * M0));
        const double rate_sup = (f.V_inf + shift) * Ms * std::max(W, 1.0);
        if (rate_sup > 0.0) target_t = std::min(target_t, 0.9 / rate_sup);
        if (f.delta0 > 0.0 && M0 > 0.0) {
            const double ts = tstar(f.V_inf, M0, f.delta0) / 50.0;
            target_x = std::min(target_x, ts);
            target_t = std::min(target_t, ts);
        }
    }
    auto substeps_for = [](double width, double target, std::size_t override_n) {
        if (override_n > 0) return override_n;
        if (!std::isfinite(target) || target <= 0.0) return std::size_t{1};
        return static_cast<std::size_t>(std::max(1.0, std::ceil(width / target)));
    };
    const std::size_t rx = substeps_for(dx, target_x, x_substeps);
    const double hx = dx / static_cast<double>(rx);

    // Backward extension to cover the un-tilt: ke whole cells left of a_minus.
    const std::size_t ke =
        shift > 0.0 ? static_cast<std::size_t>(std::ceil(shift * T / dx - 1e-12)) : 0;
    const double x_lo = f.grid.x_at(ia_lo) - static_cast<double>(ke) * dx;
    const std::size_t ncells = ke + (ia_hi - ia_lo);
    const std::size_t nsub = ncells * rx;  // dense sweep lattice from x_lo to a_plus

    const std::size_t nx_out = ia_hi - ia_lo + 1;
    MarginalField out;
    out.marks = f.marks;
    out.V_inf = f.V_inf;
    out.grid = Grid1D{f.grid.x_at(ia_lo), dx, nx_out};
    out.t_slices.assign(f.t_slices.begin(), f.t_slices.begin() + s_hi + 1);
    out.values.assign(s_hi + 1, std::vector<double>(nx_out * m, 0.0));

    std::vector<double> rates, raw;

    // Stage 1: left-edge value at t0. The extension value at x_lo is defined
    // as the preimage of ell0 under the (linear) forward Euler sweep from
    // x_lo to a_minus, so every slice below — the initial one included — is
    // produced by the same forward sweep and shares one error structure; a
    // one-sided backward march would put the initial slice on a different
    // error branch and show up as a spurious seam in the time residual.
    std::vector<double> edge0 = ell0;
    if (ke > 0) {
        const std::size_t nback = ke * rx;
        auto sweep_to_aminus = [&](std::vector<double> v) {
            for (std::size_t q = 0; q < nback; ++q) {
                const double x = x_lo + static_cast<double>(q) * hx;
                detail::eval_pairs_clamped(f, x, t0, rates);
                detail::forward_step(f.marks, rates, v, hx, "build_ell_box",
                                     "x = " + std::to_string(x + hx) + ", t = t0");
            }
            return v;
        };
        std::vector<double> P(m * m, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            std::vector<double> unit(m, 0.0);
            unit[j] = 1.0;
            unit = sweep_to_aminus(std::move(unit));
            for (std::size_t i = 0; i < m; ++i) P[i * m + j] = unit[i];
        }
        edge0 = detail::solve_linear(std::move(P), ell0, "build_ell_box");
        for (double v : edge0) {
            if (!(v >= 0.0)) {
                throw std::runtime_error("build_ell_box: positivity lost at the backward extension");
            }
        }
        const std::vector<double> back = sweep_to_aminus(edge0);
        for (std::size_t i = 0; i < m; ++i) {
            if (std::abs(back[i] - ell0[i]) > 1e-9 * (1.0 + std::abs(ell0[i]))) {
                throw std::runtime_error(
                    "build_ell_box: backward extension failed to reproduce the initial law");
            }
        }
    }

    // Stages 2-4 per slice: advance the left edge in t with tilted rates,
    // sweep the slice in x with the tilted kernel, then un-tilt onto the
    // output nodes by linear interpolation on the sweep lattice.
    std::vector<double> dense((nsub + 1) * m, 0.0);
    std::vector<double> edge = edge0;
    for (std::size_t s = 0; s <= s_hi; ++s) {
        if (s > 0) {
            const double t_prev = f.t_slices[s - 1];
            const double t_cur = f.t_slices[s];
            const std::size_t rt = substeps_for(t_cur - t_prev, target_t, t_substeps);
            const double ht = (t_cur - t_prev) / static_cast<double>(rt);
            for (std::size_t q = 0; q < rt; ++q) {
                const double t = t_prev + static_cast<double>(q) * ht;
                detail::eval_pairs_clamped(f, x_lo + shift * (t - t0), t, raw);
                rates.assign(np, 0.0);
                for (std::size_t p = 0; p < np; ++p) {
                    rates[p] = (f.pairs.alpha_[p] + shift) * raw[p];
                }
                detail::forward_step(f.marks, rates, edge, ht,
                                     "build_ell_box", "left edge, t = " + std::to_string(t + ht));
            }
        }

        const double t_cur = f.t_slices[s];
        const double dt_s = t_cur - t0;
        std::vector<double> cur = edge;
        if (shift == 0.0) {
            // No tilt (ke = 0): record the output nodes directly on the sweep.
            for (std::size_t i = 0; i < m; ++i) out.values[s][i] = cur[i];
            for (std::size_t q = 0; q < nsub; ++q) {
                const double x = x_lo + static_cast<double>(q) * hx;
                detail::eval_pairs_clamped(f, x, t_cur, rates);
                detail::forward_step(f.marks, rates, cur, hx, "build_ell_box",
                                     "x = " + std::to_string(x + hx) +
                                         ", t = " + std::to_string(t_cur));
                if ((q + 1) % rx == 0) {
                    const std::size_t node = (q + 1) / rx;
                    for (std::size_t i = 0; i < m; ++i) out.values[s][node * m + i] = cur[i];
                }
            }
            continue;
        }

        for (std::size_t i = 0; i < m; ++i) dense[i] = cur[i];
        for (std::size_t q = 0; q < nsub; ++q) {
            const double x = x_lo + static_cast<double>(q) * hx;
            detail::eval_pairs_clamped(f, x + shift * dt_s, t_cur, rates);
            detail::forward_step(f.marks, rates, cur, hx,
                                 "build_ell_box",
                                 "x = " + std::to_string(x + hx) + ", t = " + std::to_string(t_cur));
            for (std::size_t i = 0; i < m; ++i) dense[(q + 1) * m + i] = cur[i];
        }

        for (std::size_t node = 0; node < nx_out; ++node) {
            const double y = out.grid.x_at(node) - shift * dt_s;
            double pos = (y - x_lo) / hx;
            if (pos < 0.0) pos = 0.0;
            if (pos > static_cast<double>(nsub)) pos = static_cast<double>(nsub);
            const double r = std::round(pos);
            if (std::abs(pos - r) <= 1e-9) {
                const std::size_t q0 = static_cast<std::size_t>(r);
                for (std::size_t i = 0; i < m; ++i) {
                    out.values[s][node * m + i] = dense[q0 * m + i];
                }
                continue;
            }
            std::size_t q0 = static_cast<std::size_t>(pos);
            if (q0 >= nsub) q0 = nsub - 1;
            const double frac = pos - static_cast<double>(q0);
            for (std::size_t i = 0; i < m; ++i) {
                out.values[s][node * m + i] =
                    (1.0 - frac) * dense[q0 * m + i] + frac * dense[(q0 + 1) * m + i];
            }
        }
    }

    // Certify the construction: positive floor, beta-mass 1 at every node.
    double floor = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s <= s_hi; ++s) {
        for (std::size_t node = 0; node < nx_out; ++node) {
            double mass = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double v = out.values[s][node * m + i];
                floor = std::min(floor, v);
                mass += v * f.marks.weight(i);
            }
            if (std::abs(mass - 1.0) > 1e-8) {
                throw std::runtime_error("build_ell_box: mass drift " +
                                         std::to_string(std::abs(mass - 1.0)) + " at node " +
                                         std::to_string(node) + ", slice " + std::to_string(s));
            }
        }
    }
    if (floor < 0.0) {
        throw std::runtime_error("build_ell_box: positivity lost (floor = " +
                                 std::to_string(floor) + ")");
    }
    out.floor = floor;
    out.validate();
    return out;
}

// Max-norm residual of the t-direction forward equation,
// xi = l_t - l*(alpha f) + A l, by finite differences on the field's own
// slices (central in the interior, one-sided difference quotient when only
// two slices exist). Small xi certifies that the x- and t-flows commute,
// which holds when f itself solves the kinetic equation.
inline double xi_residual(const Kernel& f, const MarginalField& ell) {
    f.validate();
    ell.validate();
    if (ell.marks.size() != f.marks.size()) {
        throw std::invalid_argument("xi_residual: mark count mismatch");
    }
    if (ell.t_slices.size() < 2) {
        throw std::invalid_argument("xi_residual: needs at least two slices");
    }
    const double xtol = 1e-9 * f.grid.dx;
    if (ell.grid.x0 < f.grid.x0 - xtol || ell.grid.x_max() > f.grid.x_max() + xtol ||
        ell.t_slices.front() < f.t_min() - 1e-12 ||
        ell.t_slices.back() > f.t_max() + 1e-9 * (f.t_max() - f.t_min() + 1.0)) {
        throw std::invalid_argument("xi_residual: marginal extends beyond the kernel's box");
    }

    const std::size_t m = f.marks.size();
    const std::size_t np = f.npairs();
    const std::size_t nt = ell.t_slices.size();
    std::vector<double> raw(np, 0.0);

    double worst = 0.0;
    const std::size_t s_first = nt == 2 ? 0 : 1;
    const std::size_t s_last = nt == 2 ? 0 : nt - 2;
    for (std::size_t s = s_first; s <= s_last; ++s) {
        for (std::size_t node = 0; node < ell.grid.n; ++node) {
            const double x = ell.grid.x_at(node);
            double t_eval;
            std::vector<double> dldt(m, 0.0), lnow(m, 0.0);
            if (nt == 2) {
                const double dt = ell.t_slices[1] - ell.t_slices[0];
                t_eval = 0.5 * (ell.t_slices[0] + ell.t_slices[1]);
                for (std::size_t i = 0; i < m; ++i) {
                    dldt[i] = (ell.at(1, node, i) - ell.at(0, node, i)) / dt;
                    lnow[i] = 0.5 * (ell.at(0, node, i) + ell.at(1, node, i));
                }
            } else {
                const double dt2 = ell.t_slices[s + 1] - ell.t_slices[s - 1];
                t_eval = ell.t_slices[s];
                for (std::size_t i = 0; i < m; ++i) {
                    dldt[i] = (ell.at(s + 1, node, i) - ell.at(s - 1, node, i)) / dt2;
                    lnow[i] = ell.at(s, node, i);
                }
            }
            detail::eval_pairs_clamped(f, x, t_eval, raw);
            std::vector<double> rhs(m, 0.0);
            std::size_t p = 0;
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = i + 1; j < m; ++j, ++p) {
                    const double r = f.pairs.alpha_[p] * raw[p];
                    rhs[j] += r * lnow[i] * f.marks.weight(i);
                    rhs[i] -= r * f.marks.weight(j) * lnow[i];
                }
            }
            for (std::size_t i = 0; i < m; ++i) {
                worst = std::max(worst, std::abs(dldt[i] - rhs[i]));
            }
        }
    }
    return worst;
}

}  // namespace gibbstess
