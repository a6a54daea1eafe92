#pragma once

// Collision operator and kinetic solvers.
//
// The pair kernel f(x, t, a, b) of a consistent tessellation satisfies
//
//     f_t - alpha(a,b) f_x = Q(f)(a,b),
//     Q(f)(a,b) = Q+(f)(a,b) - f(a,b) * Lf(a,b),
//     Q+(f)(a,b) = sum_{a ≺ m ≺ b} sigma(a,m,b) f(a,m) f(m,b) w_m,
//     Lf(a,b)   = (A(b) - A(a)) - alpha(a,b) (lambda(b) - lambda(a)),
//
// with lambda(r) = sum_{r ≺ m} f(r,m) w_m and A(r) = sum_{r ≺ m}
// alpha(r,m) f(r,m) w_m. Everything also works with the chord slope alpha
// replaced by an arbitrary per-pair velocity table v (used for the
// one-dimensional Hamiltonian variant, where v is a chord slope of H and
// sigma becomes v(m,b) - v(a,m)); the default table is the bracket table.
//
// Q can be assembled from the velocity-free bilinear form
//     B(f,g)(a,b) = sum_m f(a,m) g(m,b) w_m - Lam(f)(a) g(a,b) - Lam(g)(b) f(a,b)
// (Lam = row mass): Q(f) = B(f, v·f) - B(v·f, f). The triple-kernel
// compatibility system D_j f^i - D_i f^j = B(f^i,f^j) - B(f^j,f^i) is checked
// by system_residual.
//
// The polygonal solver is the time-stepping scheme behind the existence
// theory, in equivalent semi-Lagrangian form: one Euler increment of Q
// followed by a per-pair shift to the characteristic foot point x + v dt,
// with clamped linear interpolation at the grid edges (inputs are expected
// to carry V*T padding so the window of interest never touches the clamp).
// Values stay inside [delta0/2, 2*M0] on the support cone up to the horizon
// tstar(V, M0, delta0), which the solver enforces.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernel.hpp"
#include "marks.hpp"

namespace gibbstess {

// Guaranteed existence/positivity horizon.
inline double tstar(double V_inf, double M0, double delta0) {
    if (!(V_inf > 0.0) || !(M0 > 0.0) || !(delta0 > 0.0)) {
        throw std::domain_error("tstar: all arguments must be positive");
    }
    return std::min(1.0 / (12.0 * V_inf * M0), delta0 / (48.0 * V_inf * M0 * M0));
}

// Per-pair chord-slope table of the bracket velocities.
inline std::vector<double> bracket_velocities(const PairTable& pt) { return pt.alpha_; }

// Per-pair chord slopes of a Hamiltonian given by its values at the atoms:
// v(i,j) = (H_j - H_i) / (rho1_j - rho1_i). Finite because atoms have
// pairwise-distinct rho1.
inline std::vector<double> hamiltonian_velocities(const MarkSet& ms,
                                                  const std::vector<double>& H_at_atoms) {
    if (H_at_atoms.size() != ms.size()) {
        throw std::invalid_argument("hamiltonian_velocities: one H value per atom required");
    }
    PairTable idx;
    idx.m = ms.size();
    std::vector<double> v(ms.size() * (ms.size() - 1) / 2);
    for (std::size_t i = 0; i < ms.size(); ++i) {
        for (std::size_t j = i + 1; j < ms.size(); ++j) {
            v[idx.index(i, j)] = (H_at_atoms[j] - H_at_atoms[i]) /
                                 (ms.mark(j).rho1 - ms.mark(i).rho1);
        }
    }
    return v;
}

// Jump-intensity moments of a kernel at a point, one value per mark.
struct Moments {
    std::vector<double> lambda;  // total intensity  sum_{r ≺ m} f w
    std::vector<double> amom;    // velocity moment  sum_{r ≺ m} v f w
};

// The collision operator over one spatial node (a flat array of npairs
// values). Holds its scratch buffers, so reuse one instance per thread.
class KineticOp {
  public:
    KineticOp(const MarkSet& ms, const PairTable& pt, std::vector<double> velocities)
        : ms_(&ms), pt_(&pt), vel_(std::move(velocities)), lam_(ms.size()), am_(ms.size()) {
        if (vel_.size() != pt.npairs()) {
            throw std::invalid_argument("kinetic operator: velocity table size mismatch");
        }
    }

    static KineticOp bracket(const MarkSet& ms, const PairTable& pt) {
        return KineticOp(ms, pt, bracket_velocities(pt));
    }

    const std::vector<double>& velocities() const { return vel_; }

    double max_speed() const {
        double v = 0.0;
        for (double w : vel_) v = std::max(v, std::abs(w));
        return v;
    }

    std::size_t nmarks() const { return ms_->size(); }
    std::size_t npairs() const { return pt_->npairs(); }

    // lambda and velocity moments per mark from one node's pair values.
    void moments_node(const double* f, double* lambda, double* amom) const {
        const std::size_t m = ms_->size();
        for (std::size_t i = 0; i < m; ++i) {
            double l = 0.0, a = 0.0;
            for (std::size_t j = i + 1; j < m; ++j) {
                const std::size_t p = pt_->index(i, j);
                const double fw = f[p] * ms_->weight(j);
                l += fw;
                a += vel_[p] * fw;
            }
            lambda[i] = l;
            amom[i] = a;
        }
    }

    // Q(f) per ordered pair at one node.
    void q_node(const double* f, double* q) {
        const std::size_t m = ms_->size();
        moments_node(f, lam_.data(), am_.data());
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) {
                const std::size_t p = pt_->index(i, j);
                double gain = 0.0;
                for (std::size_t k = i + 1; k < j; ++k) {
                    const std::size_t pik = pt_->index(i, k);
                    const std::size_t pkj = pt_->index(k, j);
                    gain += (vel_[pkj] - vel_[pik]) * f[pik] * f[pkj] * ms_->weight(k);
                }
                const double loss =
                    (am_[j] - am_[i]) - vel_[p] * (lam_[j] - lam_[i]);
                q[p] = gain - f[p] * loss;
            }
        }
    }

    // Velocity-free bilinear form B(f,g) per ordered pair at one node:
    // middle-mark convolution minus row-mass multiplications on both sides.
    void bilinear_node(const double* f, const double* g, double* out) const {
        const std::size_t m = ms_->size();
        // Row masses Lam(h)(r) = sum_{r ≺ k} h(r,k) w_k for both arguments.
        std::vector<double>& lam_f = scratch_a_;
        std::vector<double>& lam_g = scratch_b_;
        lam_f.assign(m, 0.0);
        lam_g.assign(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) {
                const std::size_t p = pt_->index(i, j);
                lam_f[i] += f[p] * ms_->weight(j);
                lam_g[i] += g[p] * ms_->weight(j);
            }
        }
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) {
                const std::size_t p = pt_->index(i, j);
                double conv = 0.0;
                for (std::size_t k = i + 1; k < j; ++k) {
                    conv += f[pt_->index(i, k)] * g[pt_->index(k, j)] * ms_->weight(k);
                }
                out[p] = conv - lam_f[i] * g[p] - lam_g[j] * f[p];
            }
        }
    }

  private:
    const MarkSet* ms_;
    const PairTable* pt_;
    std::vector<double> vel_;
    std::vector<double> lam_, am_;
    mutable std::vector<double> scratch_a_, scratch_b_;
};

// Interpolating moments of a kernel at (x, t).
inline Moments moments(const Kernel& k, double x, double t) {
    Moments mo;
    mo.lambda.assign(k.marks.size(), 0.0);
    mo.amom.assign(k.marks.size(), 0.0);
    for (std::size_t i = 0; i < k.marks.size(); ++i) {
        for (std::size_t j = i + 1; j < k.marks.size(); ++j) {
            const double fw = kernel_eval(k, x, t, i, j) * k.marks.weight(j);
            mo.lambda[i] += fw;
            mo.amom[i] += k.pairs.alpha_of(i, j) * fw;
        }
    }
    return mo;
}

// Interpolating Q(f) at (x, t), one value per ordered pair.
inline std::vector<double> q_apply(const Kernel& k, double x, double t) {
    std::vector<double> f(k.npairs(), 0.0);
    for (std::size_t i = 0; i < k.marks.size(); ++i) {
        for (std::size_t j = i + 1; j < k.marks.size(); ++j) {
            f[k.pairs.index(i, j)] = kernel_eval(k, x, t, i, j);
        }
    }
    KineticOp op = KineticOp::bracket(k.marks, k.pairs);
    std::vector<double> q(k.npairs());
    op.q_node(f.data(), q.data());
    return q;
}

enum class Scheme { Polygonal, HomogeneousRk4 };

namespace detail {

// Linear interpolation of one pair's nodal column at an arbitrary point,
// clamped to the grid edges (constant extrapolation).
inline double interp_clamped(const Grid1D& g, const std::vector<double>& slice,
                             std::size_t npairs, std::size_t p, double x) {
    if (x <= g.x0) return slice[p];
    if (x >= g.x_max()) return slice[(g.n - 1) * npairs + p];
    const double s = (x - g.x0) / g.dx;
    std::size_t i = static_cast<std::size_t>(s);
    if (i >= g.n - 1) i = g.n - 2;
    const double frac = s - static_cast<double>(i);
    return (1.0 - frac) * slice[i * npairs + p] + frac * slice[(i + 1) * npairs + p];
}

struct SupportInfo {
    std::vector<char> active;  // pairs the solution may occupy
    double V = 0.0;            // speed bound over active pairs
    double M0 = 0.0;           // sup of the initial slice over active pairs
    double inf0 = 0.0;         // inf of the initial slice over active pairs
};

// Decide the support cone (full or one-sided) and measure the initial
// bounds over it. For the bracket table the cone is |alpha| <= V_inf; when
// the data vanishes on every negative-velocity cone pair, the one-sided
// cone is used instead (it is closed under the dynamics by the same chord
// convexity argument).
inline SupportInfo support_info(const Kernel& h, const std::vector<double>& vel, double V) {
    const std::size_t np = h.npairs();
    SupportInfo s;
    s.V = V;
    std::vector<char> cone(np), plus(np);
    for (std::size_t p = 0; p < np; ++p) {
        cone[p] = std::abs(vel[p]) <= V * (1.0 + 1e-12) ? 1 : 0;
        plus[p] = (cone[p] && vel[p] >= 0.0) ? 1 : 0;
    }
    bool vanishes_on_minus = true;
    for (std::size_t p = 0; p < np && vanishes_on_minus; ++p) {
        if (cone[p] && !plus[p]) {
            for (std::size_t ix = 0; ix < h.grid.n; ++ix) {
                if (h.values[0][ix * np + p] != 0.0) {
                    vanishes_on_minus = false;
                    break;
                }
            }
        }
    }
    s.active = vanishes_on_minus ? plus : cone;
    s.M0 = 0.0;
    s.inf0 = std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t p = 0; p < np; ++p) {
        if (!s.active[p]) continue;
        any = true;
        for (std::size_t ix = 0; ix < h.grid.n; ++ix) {
            const double v = h.values[0][ix * np + p];
            s.M0 = std::max(s.M0, v);
            s.inf0 = std::min(s.inf0, v);
        }
    }
    if (!any) throw std::invalid_argument("solve_kinetic: initial data has empty support cone");
    return s;
}

}  // namespace detail

// Evolve initial data (slice 0 of h) to horizon T in `steps` uniform steps.
// `velocities` overrides the bracket table (one-dimensional Hamiltonian
// variant); the speed bound is then max |v| instead of h.V_inf.
inline Kernel solve_kinetic(const Kernel& h, double T, std::size_t steps, Scheme scheme,
                            const std::vector<double>* velocities = nullptr) {
    h.validate();
    if (!(T > 0.0)) throw std::invalid_argument("solve_kinetic: T must be positive");
    if (steps == 0) throw std::invalid_argument("solve_kinetic: steps must be positive");

    std::vector<double> vel =
        velocities ? *velocities : bracket_velocities(h.pairs);
    if (vel.size() != h.npairs()) {
        throw std::invalid_argument("solve_kinetic: velocity table size mismatch");
    }
    double V = h.V_inf;
    if (velocities) {
        V = 0.0;
        for (double v : vel) V = std::max(V, std::abs(v));
        if (V == 0.0) V = h.V_inf;  // null Hamiltonian: keep a positive bound
    }

    const detail::SupportInfo sup = detail::support_info(h, vel, V);
    if (!(h.delta0 > 0.0)) throw std::invalid_argument("solve_kinetic: delta0 must be positive");
    if (sup.inf0 < h.delta0 * (1.0 - 1e-12)) {
        throw std::invalid_argument(
            "solve_kinetic: initial data falls below delta0 on its support cone");
    }
    const double horizon = tstar(V, sup.M0, h.delta0);
    if (T > horizon * (1.0 + 1e-12)) {
        throw std::invalid_argument("solve_kinetic: T = " + std::to_string(T) +
                                    " exceeds the guaranteed horizon " +
                                    std::to_string(horizon));
    }

    const std::size_t np = h.npairs();
    const std::size_t nx = h.grid.n;
    const double t0 = h.t_slices.front();
    const double dt = T / static_cast<double>(steps);

    Kernel out;
    out.marks = h.marks;
    out.pairs = h.pairs;
    out.V_inf = velocities ? V : h.V_inf;
    out.delta0 = h.delta0;
    out.grid = h.grid;
    out.t_slices.reserve(steps + 1);
    out.values.reserve(steps + 1);
    out.t_slices.push_back(t0);
    out.values.push_back(h.values[0]);

    KineticOp op(h.marks, h.pairs, vel);

    if (scheme == Scheme::HomogeneousRk4) {
        // Demands spatially constant data: the transport term is then inert
        // and the PDE reduces to the ODE f' = Q(f) at a single node.
        std::vector<double> f0(np);
        for (std::size_t p = 0; p < np; ++p) {
            const double v = h.values[0][p];
            for (std::size_t ix = 1; ix < nx; ++ix) {
                if (std::abs(h.values[0][ix * np + p] - v) > 1e-12 * std::max(1.0, std::abs(v))) {
                    throw std::invalid_argument(
                        "solve_kinetic: homogeneous-rk4 requires x-independent data");
                }
            }
            f0[p] = v;
        }
        std::vector<double> k1(np), k2(np), k3(np), k4(np), tmp(np), f = f0;
        for (std::size_t j = 0; j < steps; ++j) {
            op.q_node(f.data(), k1.data());
            for (std::size_t p = 0; p < np; ++p) tmp[p] = f[p] + 0.5 * dt * k1[p];
            op.q_node(tmp.data(), k2.data());
            for (std::size_t p = 0; p < np; ++p) tmp[p] = f[p] + 0.5 * dt * k2[p];
            op.q_node(tmp.data(), k3.data());
            for (std::size_t p = 0; p < np; ++p) tmp[p] = f[p] + dt * k3[p];
            op.q_node(tmp.data(), k4.data());
            for (std::size_t p = 0; p < np; ++p) {
                f[p] += dt / 6.0 * (k1[p] + 2.0 * k2[p] + 2.0 * k3[p] + k4[p]);
                if (!sup.active[p]) f[p] = 0.0;
            }
            for (std::size_t p = 0; p < np; ++p) {
                if (sup.active[p] && !(f[p] > 0.0)) {
                    throw std::runtime_error("solve_kinetic: positivity lost at t = " +
                                             std::to_string(t0 + (j + 1) * dt));
                }
            }
            std::vector<double> slice(nx * np);
            for (std::size_t ix = 0; ix < nx; ++ix) {
                std::copy(f.begin(), f.end(), slice.begin() + ix * np);
            }
            out.t_slices.push_back(t0 + static_cast<double>(j + 1) * dt);
            out.values.push_back(std::move(slice));
        }
    } else {
        std::vector<double> q(np), updated(nx * np), next(nx * np);
        for (std::size_t j = 0; j < steps; ++j) {
            const std::vector<double>& cur = out.values.back();
            // Euler increment of the collision operator at every node.
            for (std::size_t ix = 0; ix < nx; ++ix) {
                op.q_node(cur.data() + ix * np, q.data());
                for (std::size_t p = 0; p < np; ++p) {
                    updated[ix * np + p] = cur[ix * np + p] + dt * q[p];
                }
            }
            // Shift each pair to its characteristic foot point x + v dt.
            for (std::size_t p = 0; p < np; ++p) {
                if (!sup.active[p]) {
                    for (std::size_t ix = 0; ix < nx; ++ix) next[ix * np + p] = 0.0;
                    continue;
                }
                const double shift = vel[p] * dt;
                for (std::size_t ix = 0; ix < nx; ++ix) {
                    next[ix * np + p] = detail::interp_clamped(
                        h.grid, updated, np, p, h.grid.x_at(ix) + shift);
                }
            }
            for (std::size_t ix = 0; ix < nx; ++ix) {
                for (std::size_t p = 0; p < np; ++p) {
                    if (sup.active[p] && !(next[ix * np + p] > 0.0)) {
                        throw std::runtime_error("solve_kinetic: positivity lost at t = " +
                                                 std::to_string(t0 + (j + 1) * dt));
                    }
                }
            }
            out.t_slices.push_back(t0 + static_cast<double>(j + 1) * dt);
            out.values.push_back(next);
        }
    }

    // Positivity corridor guaranteed by the horizon bound.
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& slice : out.values) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
            for (std::size_t p = 0; p < np; ++p) {
                if (!sup.active[p]) continue;
                lo = std::min(lo, slice[ix * np + p]);
                hi = std::max(hi, slice[ix * np + p]);
            }
        }
    }
    if (lo < 0.5 * h.delta0 * (1.0 - 1e-9) || hi > 2.0 * sup.M0 * (1.0 + 1e-9)) {
        throw std::runtime_error("solve_kinetic: solution left the positivity corridor [" +
                                 std::to_string(0.5 * h.delta0) + ", " +
                                 std::to_string(2.0 * sup.M0) + "]");
    }
    return out;
}

// One-dimensional Hamiltonian variant: same dynamics with the bracket table
// replaced by the chord slopes of H (given by its values at the atoms).
inline Kernel solve_kinetic_1d(const Kernel& h, const std::vector<double>& H_at_atoms, double T,
                               std::size_t steps, Scheme scheme = Scheme::Polygonal) {
    const std::vector<double> vel = hamiltonian_velocities(h.marks, H_at_atoms);
    return solve_kinetic(h, T, steps, scheme, &vel);
}

// Max-norm residual of the planar equation f_t - v f_x = Q(f) over interior
// nodes, by central differences (with a midpoint rule when only two time
// slices exist). `velocities` defaults to the bracket table.
inline double kinetic_residual(const Kernel& f, const std::vector<double>* velocities = nullptr) {
    f.validate();
    if (f.t_slices.size() < 2) {
        throw std::invalid_argument("kinetic_residual: needs at least two time slices");
    }
    if (f.grid.n < 3) throw std::invalid_argument("kinetic_residual: needs at least three nodes");

    const std::vector<double> vel =
        velocities ? *velocities : bracket_velocities(f.pairs);
    KineticOp op(f.marks, f.pairs, vel);
    const std::size_t np = f.npairs();
    const std::size_t nx = f.grid.n;
    const std::size_t nt = f.t_slices.size();

    std::vector<double> q(np);
    double worst = 0.0;
    auto scan = [&](const std::vector<double>& val, const std::vector<double>& dval_dt) {
        for (std::size_t ix = 1; ix + 1 < nx; ++ix) {
            op.q_node(val.data() + ix * np, q.data());
            for (std::size_t p = 0; p < np; ++p) {
                const double fx = (val[(ix + 1) * np + p] - val[(ix - 1) * np + p]) /
                                  (2.0 * f.grid.dx);
                const double r = dval_dt[ix * np + p] - vel[p] * fx - q[p];
                worst = std::max(worst, std::abs(r));
            }
        }
    };

    if (nt == 2) {
        const double dt = f.t_slices[1] - f.t_slices[0];
        std::vector<double> mid(nx * np), dfdt(nx * np);
        for (std::size_t i = 0; i < nx * np; ++i) {
            mid[i] = 0.5 * (f.values[0][i] + f.values[1][i]);
            dfdt[i] = (f.values[1][i] - f.values[0][i]) / dt;
        }
        scan(mid, dfdt);
    } else {
        std::vector<double> dfdt(nx * np);
        for (std::size_t s = 1; s + 1 < nt; ++s) {
            const double span = f.t_slices[s + 1] - f.t_slices[s - 1];
            for (std::size_t i = 0; i < nx * np; ++i) {
                dfdt[i] = (f.values[s + 1][i] - f.values[s - 1][i]) / span;
            }
            scan(f.values[s], dfdt);
        }
    }
    return worst;
}

// Residual of the triple-kernel compatibility system
//     D_j f^i - D_i f^j = B(f^i, f^j) - B(f^j, f^i),   1 <= i < j <= 3,
// for three kernels stored on one shared grid. The stored axes cover two of
// the three coordinates (grid axis = coordinate `grid_axis`, slice axis =
// coordinate `slice_axis`, both in {1,2,3}); derivatives along the missing
// coordinate are taken to vanish, i.e. the fields are a slice of a state
// constant in that direction.
struct SystemAxes {
    int grid_axis = 1;
    int slice_axis = 2;
};

inline double system_residual(const Kernel& f1, const Kernel& f2, const Kernel& f3,
                              SystemAxes axes = {}) {
    const Kernel* fs[3] = {&f1, &f2, &f3};
    for (const Kernel* k : fs) {
        if (k->grid.n != f1.grid.n || k->grid.dx != f1.grid.dx || k->grid.x0 != f1.grid.x0 ||
            k->t_slices != f1.t_slices || k->marks.size() != f1.marks.size()) {
            throw std::invalid_argument("system_residual: kernels must share grid and marks");
        }
    }
    if (f1.t_slices.size() < 2 || f1.grid.n < 3) {
        throw std::invalid_argument("system_residual: needs >= 2 slices and >= 3 nodes");
    }
    if (axes.grid_axis == axes.slice_axis || axes.grid_axis < 1 || axes.grid_axis > 3 ||
        axes.slice_axis < 1 || axes.slice_axis > 3) {
        throw std::invalid_argument("system_residual: axes must be distinct coordinates 1..3");
    }

    KineticOp op(f1.marks, f1.pairs, bracket_velocities(f1.pairs));
    const std::size_t np = f1.npairs();
    const std::size_t nx = f1.grid.n;
    const std::size_t nt = f1.t_slices.size();

    // Evaluation slices: midpoint for two slices, interior slices otherwise.
    struct Eval {
        std::vector<double> val[3];   // field values per kernel
        std::vector<double> dslc[3];  // slice-axis derivative per kernel
    };
    std::vector<Eval> evals;
    if (nt == 2) {
        Eval e;
        const double dt = f1.t_slices[1] - f1.t_slices[0];
        for (int k = 0; k < 3; ++k) {
            e.val[k].resize(nx * np);
            e.dslc[k].resize(nx * np);
            for (std::size_t i = 0; i < nx * np; ++i) {
                e.val[k][i] = 0.5 * (fs[k]->values[0][i] + fs[k]->values[1][i]);
                e.dslc[k][i] = (fs[k]->values[1][i] - fs[k]->values[0][i]) / dt;
            }
        }
        evals.push_back(std::move(e));
    } else {
        for (std::size_t s = 1; s + 1 < nt; ++s) {
            Eval e;
            const double span = f1.t_slices[s + 1] - f1.t_slices[s - 1];
            for (int k = 0; k < 3; ++k) {
                e.val[k] = fs[k]->values[s];
                e.dslc[k].resize(nx * np);
                for (std::size_t i = 0; i < nx * np; ++i) {
                    e.dslc[k][i] = (fs[k]->values[s + 1][i] - fs[k]->values[s - 1][i]) / span;
                }
            }
            evals.push_back(std::move(e));
        }
    }

    std::vector<double> bij(np), bji(np);
    double worst = 0.0;
    for (const Eval& e : evals) {
        for (std::size_t ix = 1; ix + 1 < nx; ++ix) {
            // Derivative of kernel k along coordinate c at this node.
            auto deriv = [&](int k, int c, std::size_t p) -> double {
                if (c == axes.grid_axis) {
                    return (e.val[k][(ix + 1) * np + p] - e.val[k][(ix - 1) * np + p]) /
                           (2.0 * f1.grid.dx);
                }
                if (c == axes.slice_axis) return e.dslc[k][ix * np + p];
                return 0.0;
            };
            for (int i = 0; i < 3; ++i) {
                for (int j = i + 1; j < 3; ++j) {
                    op.bilinear_node(e.val[i].data() + ix * np, e.val[j].data() + ix * np,
                                     bij.data());
                    op.bilinear_node(e.val[j].data() + ix * np, e.val[i].data() + ix * np,
                                     bji.data());
                    for (std::size_t p = 0; p < np; ++p) {
                        const double lhs = deriv(i, j + 1, p) - deriv(j, i + 1, p);
                        const double r = lhs - (bij[p] - bji[p]);
                        worst = std::max(worst, std::abs(r));
                    }
                }
            }
        }
    }
    return worst;
}

}  // namespace gibbstess
